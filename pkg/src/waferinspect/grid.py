"""Grid addressing: chips at integer coordinates, streets at half-integers.

A street key has exactly one half-integer component; the street with a
half-integer x lies between two horizontally adjacent chips.
"""

from __future__ import annotations


def streets_of_chip(chip: tuple[int, int]) -> list[tuple[float, float]]:
    """The four street coordinates adjacent to a chip cell."""
    i, j = chip
    return [(i - 0.5, float(j)), (i + 0.5, float(j)), (float(i), j - 0.5), (float(i), j + 0.5)]


def chips_of_street(street: tuple[float, float]) -> list[tuple[int, int]]:
    """The two chip cells a street separates."""
    x, y = street
    if not is_street_key(street):
        raise ValueError(f"not a street coordinate: {street}")
    if x != round(x):
        return [(int(x - 0.5), int(y)), (int(x + 0.5), int(y))]
    return [(int(x), int(y - 0.5)), (int(x), int(y + 0.5))]


def is_street_key(coord: tuple[float, float]) -> bool:
    """True when exactly one component is a half-integer."""
    fx = coord[0] % 1.0
    fy = coord[1] % 1.0
    return (fx, fy) in ((0.5, 0.0), (0.0, 0.5))


def format_coord(v: float) -> str:
    """Integer coordinates print bare, half-integers with one decimal."""
    return str(int(v)) if v == int(v) else f"{v:.1f}"


def parse_coord(s: str) -> float:
    v = float(s)
    if v % 0.5 != 0.0:
        raise ValueError(f"grid coordinates are integers or half-integers: {s}")
    return v

"""Label taxonomies: three-class defect severity and chip position."""

from __future__ import annotations

from enum import IntEnum


class Label(IntEnum):
    """Defect severity, ordered so that larger value = more severe."""

    FLAWLESS = 0
    ANOMALY = 1
    FAULTY = 2


class ChipPosition(IntEnum):
    """Whether a chip cell lies fully within the wafer disc."""

    INSIDE = 0
    OUTSIDE = 1


POSITION_NAMES = {ChipPosition.INSIDE: "inside", ChipPosition.OUTSIDE: "outside"}
POSITION_FROM_NAME = {v: k for k, v in POSITION_NAMES.items()}


def worst(a: Label, b: Label) -> Label:
    """More severe of two labels (FAULTY > ANOMALY > FLAWLESS)."""
    return a if a >= b else b

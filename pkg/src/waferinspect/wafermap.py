"""Wafer map rendering: chips as squares, streets as tick segments.

Chips sit at integer grid coordinates and render as filled squares;
streets sit at half-integer coordinates and render as stroke segments
across the gap they occupy (a street with half-integer x separates two
horizontal neighbors, so its tick bridges them horizontally). Colors
follow the fixed three-class palette green/yellow/red.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import quoteattr

from .errors import EmptyVerdict, IoFailure
from .grid import is_street_key
from .labels import Label
from .pipeline import WaferVerdict, verdict_csv

PALETTE = {
    Label.FLAWLESS: "#2ca02c",
    Label.ANOMALY: "#e6c700",
    Label.FAULTY: "#d62728",
}


@dataclass
class WaferMap:
    """A verdict with rendering parameters."""

    verdict: WaferVerdict
    palette: dict = field(default_factory=lambda: dict(PALETTE))
    cell_px: int = 24

    def __post_init__(self):
        if set(self.palette) != set(Label):
            raise ValueError("palette must cover exactly the three labels")
        if self.cell_px < 4:
            raise ValueError("cell_px too small to draw")


def _bounds(coords):
    xs = [c[0] for c in coords]
    ys = [c[1] for c in coords]
    return min(xs), min(ys), max(xs), max(ys)


def render_svg(wmap: WaferMap) -> str:
    """Serialize the map as a minimal SVG 1.1 document.

    One rect per labeled chip, one line per labeled street; deterministic
    element order (chips then streets, row-major) for stable bytes.
    """
    verdict = wmap.verdict
    entries = list(verdict.chip_labels) + list(verdict.street_labels)
    if not entries:
        raise EmptyVerdict("nothing to render")
    x0, y0, x1, y1 = _bounds(entries)
    cp = wmap.cell_px
    pad = cp  # one cell of margin all around
    width = int((x1 - x0) * cp + 2 * pad)
    height = int((y1 - y0) * cp + 2 * pad)

    def to_px(x, y):
        return pad + (x - x0) * cp, pad + (y - y0) * cp

    side = 0.72 * cp  # chip square side; streets tick across the gap
    half_tick = 0.36 * cp
    stroke_w = max(2.0, 0.12 * cp)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for (gx, gy), lab in sorted(verdict.chip_labels.items(),
                                key=lambda kv: (kv[0][1], kv[0][0])):
        px, py = to_px(gx, gy)
        parts.append(
            f'<rect x="{px - side / 2:.2f}" y="{py - side / 2:.2f}" '
            f'width="{side:.2f}" height="{side:.2f}" '
            f'fill={quoteattr(wmap.palette[lab])}/>')
    for (sx, sy), lab in sorted(verdict.street_labels.items(),
                                key=lambda kv: (kv[0][1], kv[0][0])):
        if not is_street_key((sx, sy)):
            raise ValueError(f"not a street coordinate: {(sx, sy)}")
        px, py = to_px(sx, sy)
        # the tick bridges the gap it sits in: a street with half-integer
        # x separates horizontal neighbors and draws as a horizontal dash
        if sx % 1.0 == 0.5:
            x_a, y_a, x_b, y_b = px - half_tick, py, px + half_tick, py
        else:
            x_a, y_a, x_b, y_b = px, py - half_tick, px, py + half_tick
        parts.append(
            f'<line x1="{x_a:.2f}" y1="{y_a:.2f}" x2="{x_b:.2f}" y2="{y_b:.2f}" '
            f'stroke={quoteattr(wmap.palette[lab])} '
            f'stroke-width="{stroke_w:.2f}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_csv(wmap: WaferMap) -> str:
    """Verdict rows as CSV text: kind,x,y,label with labels 0/1/2."""
    return verdict_csv(wmap.verdict)


def write_svg(path, wmap: WaferMap) -> None:
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(render_svg(wmap))
    except OSError as exc:
        raise IoFailure(f"cannot write wafer map to {path}: {exc}") from exc

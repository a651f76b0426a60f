"""Synthetic wafer rendering with seeded defects and exact ground truth.

A wafer image is a flat-gray background, a wafer disc, a chip grid with
streets between chips, and one cut line per street. Chips sit at integer
grid coordinates with the grid origin at the image center; streets take
half-integer coordinates between their two chips. The whole pattern (grid
and disc together) is shifted by a small random integer offset per wafer,
so nominal positions are close to, but not exactly, the rendered ones.

Defect magnitudes are unitless in (0, 1] and scale with the street width:
a MisdirectedCut deviates by magnitude * street_width pixels, so at
magnitude 0.5 the cut just reaches the street edge. Beyond that it cuts
into chip territory, which is why 0.5 is the Anomaly/Faulty boundary.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import grid
from .errors import BadMix, DefectOutOfGrid, InvalidLayout, IoFailure
from .image import GrayImage, write_pgm
from .labels import Label, ChipPosition, POSITION_NAMES, POSITION_FROM_NAME, worst
from .seeding import derive_seed


class DefectKind(enum.Enum):
    HOLE = "hole"
    BROKEN_CORNER = "broken_corner"
    MISDIRECTED_CUT = "misdirected_cut"


@dataclass(frozen=True)
class DefectSpec:
    """One defect to render on one street.

    rng_seed drives the defect's own placement jitter (position along the
    street, corner choice, deviation side), so a defect list fully
    determines the rendered artifacts.
    """

    kind: DefectKind
    street_index: tuple[float, float]
    magnitude: float
    rng_seed: int

    def __post_init__(self):
        if not 0.0 < self.magnitude <= 1.0:
            raise ValueError(f"magnitude must be in (0, 1], got {self.magnitude}")
        if not grid.is_street_key(self.street_index):
            raise ValueError(f"not a street coordinate: {self.street_index}")


@dataclass
class WaferLayout:
    """Geometry and gray levels of the rendered wafer pattern."""

    wafer_radius_px: float
    chip_pitch_px: int
    street_width_px: int
    chips_x: int
    chips_y: int
    cut_intensity: int = 30
    street_intensity: int = 90
    chip_intensity: int = 180
    background_intensity: int = 220
    cut_width_px: int = 0  # 0 selects max(1, street_width_px // 4)
    max_offset_px: int = 0  # pattern offset drawn uniformly from [-m, m]
    noise_sigma: float = 4.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.chips_x < 1 or self.chips_y < 1:
            raise InvalidLayout("grid needs at least one chip per axis")
        if not 0 < self.street_width_px < self.chip_pitch_px:
            raise InvalidLayout("street width must be positive and below the chip pitch")
        if self.wafer_radius_px <= self.chip_pitch_px:
            raise InvalidLayout("wafer radius must exceed the chip pitch")
        levels = (self.cut_intensity, self.street_intensity,
                  self.chip_intensity, self.background_intensity)
        if any(not 0 <= v <= 255 for v in levels):
            raise InvalidLayout("intensities must lie in [0, 255]")
        if len(set(levels)) != len(levels):
            raise InvalidLayout("gray levels must be pairwise distinct")
        if self.max_offset_px < 0 or self.noise_sigma < 0:
            raise InvalidLayout("offset and noise must be non-negative")
        if self.max_offset_px > self.street_width_px // 2:
            raise InvalidLayout("pattern offset may not exceed half the street width")

    # Geometry in pattern coordinates: x right, y down, grid top-left at
    # (margin, margin). Pixel index i covers pattern [i - ox, i + 1 - ox).

    @property
    def margin_px(self) -> int:
        return self.chip_pitch_px // 2

    def image_size(self) -> tuple[int, int]:
        w = self.chips_x * self.chip_pitch_px + 2 * self.margin_px
        h = self.chips_y * self.chip_pitch_px + 2 * self.margin_px
        return w, h

    def origin_xy(self) -> tuple[float, float]:
        w, h = self.image_size()
        return w / 2.0, h / 2.0

    def chip_indices(self) -> list[tuple[int, int]]:
        """All chip grid indices in raster order."""
        out = []
        for r in range(self.chips_y):
            for c in range(self.chips_x):
                out.append((c - self.chips_x // 2, r - self.chips_y // 2))
        return out

    def street_indices(self) -> list[tuple[float, float]]:
        """All street coordinates, sorted for deterministic iteration."""
        keys = set()
        for chip in self.chip_indices():
            keys.update(grid.streets_of_chip(chip))
        return sorted(keys, key=lambda k: (k[1], k[0]))

    def cell_bounds(self, chip: tuple[int, int]) -> tuple[int, int, int, int]:
        """Pattern-space (left, top, right, bottom) of a chip cell."""
        gi, gj = chip
        c = gi + self.chips_x // 2
        r = gj + self.chips_y // 2
        if not (0 <= c < self.chips_x and 0 <= r < self.chips_y):
            raise InvalidLayout(f"chip {chip} is outside the grid")
        left = self.margin_px + c * self.chip_pitch_px
        top = self.margin_px + r * self.chip_pitch_px
        return left, top, left + self.chip_pitch_px, top + self.chip_pitch_px

    def street_geometry(self, key: tuple[float, float]):
        """A street's boundary line and span: (axis, line, (lo, hi)).

        axis "v" means a vertical boundary (half-integer x); the span runs
        along y. Raises DefectOutOfGrid for keys not in the street set.
        """
        if key not in set(self.street_indices()):
            raise DefectOutOfGrid(f"street {key} is not in the grid")
        x, y = key
        p = self.chip_pitch_px
        if x % 1.0 == 0.5:
            k = int(x + 0.5) + self.chips_x // 2
            line = float(self.margin_px + k * p)
            r = int(y) + self.chips_y // 2
            lo = float(self.margin_px + r * p)
            return "v", line, (lo, lo + p)
        k = int(y + 0.5) + self.chips_y // 2
        line = float(self.margin_px + k * p)
        c = int(x) + self.chips_x // 2
        lo = float(self.margin_px + c * p)
        return "h", line, (lo, lo + p)

    def cut_width(self) -> int:
        return self.cut_width_px if self.cut_width_px > 0 else max(1, self.street_width_px // 4)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "WaferLayout":
        return cls(**d)


@dataclass
class GroundTruth:
    """Exact labels for one rendered wafer.

    chip_labels covers inside chips only; chip_positions covers the whole
    grid. street_labels covers every street in the grid.
    """

    street_labels: dict[tuple[float, float], Label]
    chip_labels: dict[tuple[int, int], Label]
    chip_positions: dict[tuple[int, int], ChipPosition]
    pattern_offset: tuple[int, int] = (0, 0)


def chip_position_truth(grid_index: tuple[int, int], layout: WaferLayout) -> ChipPosition:
    """Inside iff all four cell corners fall strictly within the disc."""
    left, top, right, bottom = layout.cell_bounds(grid_index)
    cx, cy = layout.origin_xy()
    r2 = layout.wafer_radius_px ** 2
    for x, y in ((left, top), (right, top), (left, bottom), (right, bottom)):
        if (x - cx) ** 2 + (y - cy) ** 2 >= r2:
            return ChipPosition.OUTSIDE
    return ChipPosition.INSIDE


def street_position(key: tuple[float, float], layout: WaferLayout) -> ChipPosition:
    """A street is inside when at least one adjacent chip is inside."""
    in_grid = set(layout.chip_indices())
    for chip in grid.chips_of_street(key):
        if chip in in_grid and chip_position_truth(chip, layout) == ChipPosition.INSIDE:
            return ChipPosition.INSIDE
    return ChipPosition.OUTSIDE


def label_for_defect(spec: DefectSpec) -> Label:
    if spec.kind == DefectKind.HOLE:
        return Label.ANOMALY
    if spec.kind == DefectKind.BROKEN_CORNER:
        return Label.FAULTY
    return Label.FAULTY if spec.magnitude > 0.5 else Label.ANOMALY


def chip_center_px(layout: WaferLayout, chip: tuple[int, int],
                   offset: tuple[int, int] = (0, 0)) -> tuple[float, float]:
    """Rendered chip center in pixel-index coordinates."""
    left, top, right, bottom = layout.cell_bounds(chip)
    return ((left + right) / 2 + offset[0] - 0.5, (top + bottom) / 2 + offset[1] - 0.5)


def street_center_px(layout: WaferLayout, key: tuple[float, float],
                     offset: tuple[int, int] = (0, 0)) -> tuple[float, float]:
    """Rendered street segment midpoint in pixel-index coordinates."""
    axis, line, (lo, hi) = layout.street_geometry(key)
    mid = (lo + hi) / 2
    if axis == "v":
        return line + offset[0] - 0.5, mid + offset[1] - 0.5
    return mid + offset[0] - 0.5, line + offset[1] - 0.5


def _axis_coords(n: int, off: int) -> np.ndarray:
    # pattern coordinates of pixel centers along one axis
    return np.arange(n, dtype=np.float64) + 0.5 - off


def _span(coords: np.ndarray, lo: float, hi: float) -> slice:
    # index slice of pixels whose centers fall in [lo, hi]
    i0 = int(np.searchsorted(coords, lo, side="left"))
    i1 = int(np.searchsorted(coords, hi, side="right"))
    return slice(i0, i1)


def _seg_dist(px, py, x0, y0, x1, y1):
    # distance from points to a segment, vectorized
    dx, dy = x1 - x0, y1 - y0
    den = dx * dx + dy * dy
    if den == 0.0:
        return np.hypot(px - x0, py - y0)
    t = np.clip(((px - x0) * dx + (py - y0) * dy) / den, 0.0, 1.0)
    return np.hypot(px - (x0 + t * dx), py - (y0 + t * dy))


class _Raster:
    """Mutable render state with axis-swapped views for horizontal streets."""

    def __init__(self, layout: WaferLayout, offset: tuple[int, int]):
        self.layout = layout
        w, h = layout.image_size()
        self.xs = _axis_coords(w, offset[0])  # pattern x per column
        self.ys = _axis_coords(h, offset[1])  # pattern y per row
        X = self.xs[None, :]
        Y = self.ys[:, None]
        cx, cy = layout.origin_xy()
        self.in_disc = (X - cx) ** 2 + (Y - cy) ** 2 <= layout.wafer_radius_px ** 2
        p = float(layout.chip_pitch_px)
        half_sw = layout.street_width_px / 2.0
        gx = X - layout.margin_px
        gy = Y - layout.margin_px
        in_grid = (gx >= 0) & (gx < layout.chips_x * p) & (gy >= 0) & (gy < layout.chips_y * p)
        fx = np.mod(gx, p)
        fy = np.mod(gy, p)
        in_chip = ((fx >= half_sw) & (fx < p - half_sw)
                   & (fy >= half_sw) & (fy < p - half_sw) & in_grid)
        base = np.where(in_chip, layout.chip_intensity, layout.street_intensity)
        self.canvas = np.where(self.in_disc, base, layout.background_intensity).astype(np.float64)
        # straight cut strips along every grid boundary, half-open on the right
        cw = layout.cut_width()
        sx = gx - np.round(gx / p) * p
        sy = gy - np.round(gy / p) * p
        kx_ok = (np.round(gx / p) >= 0) & (np.round(gx / p) <= layout.chips_x)
        ky_ok = (np.round(gy / p) >= 0) & (np.round(gy / p) <= layout.chips_y)
        along_y = (gy >= 0) & (gy < layout.chips_y * p)
        along_x = (gx >= 0) & (gx < layout.chips_x * p)
        self.vcut = (sx >= -cw / 2) & (sx < cw / 2) & kx_ok & along_y & self.in_disc
        self.hcut = (sy >= -cw / 2) & (sy < cw / 2) & ky_ok & along_x & self.in_disc

    def views(self, axis: str):
        """(canvas, disc, along_coords, cross_coords) with along as rows."""
        if axis == "v":
            return self.canvas, self.in_disc, self.ys, self.xs
        return self.canvas.T, self.in_disc.T, self.xs, self.ys

    def erase_straight_cut(self, axis: str, line: float, lo: float, hi: float):
        cw = self.layout.cut_width()
        mask = self.vcut if axis == "v" else self.hcut
        m = mask if axis == "v" else mask.T
        rows = _span(self.ys if axis == "v" else self.xs, lo, hi - 1e-9)
        cols = _span(self.xs if axis == "v" else self.ys, line - cw, line + cw)
        cross = (self.xs if axis == "v" else self.ys)[cols]
        hit = (cross >= line - cw / 2) & (cross < line + cw / 2)
        m[rows, cols] &= ~hit[None, :]


def _draw_hole(rast: _Raster, axis: str, line: float, lo: float, hi: float,
               m: float, rng: np.random.Generator, sw: int, cut: int):
    canvas, disc, along, cross = rast.views(axis)
    pos = lo + rng.uniform(0.35, 0.65) * (hi - lo)
    radius = max(1.0, m * sw / 2.0)
    rs = _span(along, pos - radius - 1, pos + radius + 1)
    cs = _span(cross, line - radius - 1, line + radius + 1)
    A = along[rs][:, None]
    C = cross[cs][None, :]
    mask = ((A - pos) ** 2 + (C - line) ** 2 <= radius ** 2) & disc[rs, cs]
    canvas[rs, cs][mask] = cut


def _draw_broken_corner(rast: _Raster, axis: str, line: float, lo: float, hi: float,
                        m: float, rng: np.random.Generator, sw: int, cut: int):
    canvas, disc, along, cross = rast.views(axis)
    legs = max(2.0, m * sw)
    half_sw = sw / 2.0
    # four chip corners abut the street: two per adjacent chip, one per end
    pick = int(rng.integers(4))
    cross_sign = -1.0 if pick in (0, 1) else 1.0  # which chip
    along_sign = 1.0 if pick in (0, 2) else -1.0  # which street end
    ce = line + cross_sign * half_sw
    ae = (lo + half_sw) if along_sign > 0 else (hi - half_sw)
    rs = _span(along, min(ae, ae + along_sign * legs) - 1, max(ae, ae + along_sign * legs) + 1)
    cs = _span(cross, min(ce, ce + cross_sign * legs) - 1, max(ce, ce + cross_sign * legs) + 1)
    u = (along[rs][:, None] - ae) * along_sign
    v = (cross[cs][None, :] - ce) * cross_sign
    mask = (u >= 0) & (v >= 0) & (u + v <= legs) & disc[rs, cs]
    canvas[rs, cs][mask] = cut


def _draw_misdirected_cut(rast: _Raster, axis: str, line: float, lo: float, hi: float,
                          m: float, rng: np.random.Generator, sw: int, cut: int):
    canvas, disc, along, cross = rast.views(axis)
    dev = m * sw
    side = 1.0 if rng.integers(2) else -1.0
    apex_a = lo + rng.uniform(0.4, 0.6) * (hi - lo)
    apex_c = line + side * dev
    cw = rast.layout.cut_width()
    rast.erase_straight_cut(axis, line, lo, hi)
    rs = _span(along, lo - 1, hi + 1)
    cs = _span(cross, min(line, apex_c) - cw, max(line, apex_c) + cw)
    A = along[rs][:, None]
    C = cross[cs][None, :]
    d1 = _seg_dist(C, A, line, lo, apex_c, apex_a)
    d2 = _seg_dist(C, A, apex_c, apex_a, line, hi)
    mask = (np.minimum(d1, d2) < cw / 2.0) & disc[rs, cs]
    canvas[rs, cs][mask] = cut


_DRAWERS = {
    DefectKind.HOLE: _draw_hole,
    DefectKind.BROKEN_CORNER: _draw_broken_corner,
    DefectKind.MISDIRECTED_CUT: _draw_misdirected_cut,
}


def generate_wafer(layout: WaferLayout, defects: list[DefectSpec],
                   seed: int) -> tuple[GrayImage, GroundTruth]:
    """Render one wafer and its exact ground truth.

    Identical arguments produce a bit-identical image. The seed drives the
    pattern offset and the additive noise; each defect carries its own
    placement seed.
    """
    streets = layout.street_indices()
    street_set = set(streets)
    for spec in defects:
        if spec.street_index not in street_set:
            raise DefectOutOfGrid(f"street {spec.street_index} is not in the grid")

    if layout.max_offset_px > 0:
        rng_off = np.random.default_rng((seed, 0))
        offset = (int(rng_off.integers(-layout.max_offset_px, layout.max_offset_px + 1)),
                  int(rng_off.integers(-layout.max_offset_px, layout.max_offset_px + 1)))
    else:
        offset = (0, 0)

    rast = _Raster(layout, offset)
    # misdirected cuts first: they replace their street's straight strip,
    # which must be erased from the cut masks before those are painted
    for spec in defects:
        if spec.kind != DefectKind.MISDIRECTED_CUT:
            continue
        axis, line, (lo, hi) = layout.street_geometry(spec.street_index)
        _draw_misdirected_cut(rast, axis, line, lo, hi, spec.magnitude,
                              np.random.default_rng(spec.rng_seed),
                              layout.street_width_px, layout.cut_intensity)
    rast.canvas[rast.vcut] = layout.cut_intensity
    rast.canvas[rast.hcut] = layout.cut_intensity
    for spec in defects:
        if spec.kind == DefectKind.MISDIRECTED_CUT:
            continue
        axis, line, (lo, hi) = layout.street_geometry(spec.street_index)
        _DRAWERS[spec.kind](rast, axis, line, lo, hi, spec.magnitude,
                            np.random.default_rng(spec.rng_seed),
                            layout.street_width_px, layout.cut_intensity)

    if layout.noise_sigma > 0:
        rng_noise = np.random.default_rng((seed, 1))
        rast.canvas += rng_noise.normal(0.0, layout.noise_sigma, rast.canvas.shape)
    pixels = np.clip(np.floor(rast.canvas + 0.5), 0, 255).astype(np.uint8)

    street_labels = {k: Label.FLAWLESS for k in streets}
    for spec in defects:
        k = spec.street_index
        street_labels[k] = worst(street_labels[k], label_for_defect(spec))
    chip_positions = {c: chip_position_truth(c, layout) for c in layout.chip_indices()}
    chip_labels = {}
    for chip, pos in chip_positions.items():
        if pos != ChipPosition.INSIDE:
            continue
        lab = Label.FLAWLESS
        for sk in grid.streets_of_chip(chip):
            lab = worst(lab, street_labels[sk])
        chip_labels[chip] = lab

    truth = GroundTruth(street_labels=street_labels, chip_labels=chip_labels,
                        chip_positions=chip_positions, pattern_offset=offset)
    return GrayImage(pixels), truth


@dataclass(frozen=True)
class ManifestRow:
    """One chip or street entry of a dataset manifest.

    path is relative to the manifest file. Outside chips carry label 0 as
    a placeholder; their position column marks them as outside.
    """

    path: str
    kind: str  # "chip" or "street"
    x: float
    y: float
    label: Label
    position: ChipPosition


MANIFEST_HEADER = ["path", "kind", "x", "y", "label", "position"]

# magnitude ranges per intended street label; broken corners sit at cell
# corners outside center-focused inspection windows, so the default palette
# realizes Faulty with misdirected cuts
DEFAULT_PALETTE = {
    Label.ANOMALY: (DefectKind.HOLE, (0.45, 0.9)),
    Label.FAULTY: (DefectKind.MISDIRECTED_CUT, (0.6, 0.95)),
}


def write_manifest(path, rows: list[ManifestRow]):
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(MANIFEST_HEADER)
            for r in rows:
                w.writerow([r.path, r.kind, grid.format_coord(r.x), grid.format_coord(r.y),
                            int(r.label), POSITION_NAMES[r.position]])
    except OSError as e:
        raise IoFailure(f"cannot write manifest {path}: {e}") from e


def read_manifest(path) -> list[ManifestRow]:
    path = Path(path)
    try:
        with path.open("r", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != MANIFEST_HEADER:
                raise IoFailure(f"bad manifest header in {path}: {header}")
            rows = []
            for rec in reader:
                if len(rec) != 6:
                    raise IoFailure(f"bad manifest row in {path}: {rec}")
                rows.append(ManifestRow(
                    path=rec[0], kind=rec[1],
                    x=grid.parse_coord(rec[2]), y=grid.parse_coord(rec[3]),
                    label=Label(int(rec[4])), position=POSITION_FROM_NAME[rec[5]]))
            return rows
    except OSError as e:
        raise IoFailure(f"cannot read manifest {path}: {e}") from e
    except (ValueError, KeyError) as e:
        raise IoFailure(f"bad manifest value in {path}: {e}") from e


def generate_dataset(layout: WaferLayout, class_mix: dict[Label, float], n_wafers: int,
                     seed: int, out_dir, palette: dict | None = None) -> list[ManifestRow]:
    """Render a wafer set to out_dir and return its manifest rows.

    class_mix gives per-street label probabilities; defects land only on
    inside streets. Writes wafer_%04d.pgm files, manifest.csv, and a
    dataset.json sidecar recording layout, seed, and per-wafer offsets.
    """
    if n_wafers < 1:
        raise BadMix("need at least one wafer")
    mix = [float(class_mix.get(lab, 0.0)) for lab in (Label.FLAWLESS, Label.ANOMALY, Label.FAULTY)]
    if any(p < 0 for p in mix) or abs(sum(mix) - 1.0) > 1e-9:
        raise BadMix(f"class mix must be non-negative and sum to 1, got {class_mix}")
    palette = DEFAULT_PALETTE if palette is None else palette
    for lab in (Label.ANOMALY, Label.FAULTY):
        if mix[lab] > 0 and lab not in palette:
            raise BadMix(f"class mix requests {lab.name} but the palette has no defect for it")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    streets = layout.street_indices()
    inside_streets = [k for k in streets if street_position(k, layout) == ChipPosition.INSIDE]
    chips = layout.chip_indices()
    street_pos = {k: street_position(k, layout) for k in streets}

    rows: list[ManifestRow] = []
    wafer_meta = []
    for w in range(n_wafers):
        rng = np.random.default_rng((seed, w, 0))
        drawn = rng.choice(3, size=len(inside_streets), p=mix)
        defects = []
        for idx, (key, lab) in enumerate(zip(inside_streets, drawn)):
            lab = Label(int(lab))
            if lab == Label.FLAWLESS:
                continue
            kind, (m_lo, m_hi) = palette[lab]
            spec = DefectSpec(kind, key, float(rng.uniform(m_lo, m_hi)),
                              derive_seed(seed, w, 1, idx))
            if label_for_defect(spec) != lab:
                raise BadMix(f"palette magnitude range for {lab.name} realizes "
                             f"{label_for_defect(spec).name}")
            defects.append(spec)
        img, truth = generate_wafer(layout, defects, derive_seed(seed, w, 2))
        name = f"wafer_{w:04d}.pgm"
        write_pgm(img, out_dir / name)
        wafer_meta.append({"path": name, "pattern_offset": list(truth.pattern_offset)})
        for chip in chips:
            rows.append(ManifestRow(
                path=name, kind="chip", x=float(chip[0]), y=float(chip[1]),
                label=truth.chip_labels.get(chip, Label.FLAWLESS),
                position=truth.chip_positions[chip]))
        for key in streets:
            rows.append(ManifestRow(
                path=name, kind="street", x=key[0], y=key[1],
                label=truth.street_labels[key], position=street_pos[key]))

    write_manifest(out_dir / "manifest.csv", rows)
    meta = {"seed": seed, "n_wafers": n_wafers,
            "class_mix": {lab.name.lower(): mix[lab] for lab in
                          (Label.FLAWLESS, Label.ANOMALY, Label.FAULTY)},
            "layout": layout.to_dict(), "wafers": wafer_meta}
    try:
        (out_dir / "dataset.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise IoFailure(f"cannot write dataset metadata: {e}") from e
    return rows

"""Classical localization: nominal chip segmentation, contour-based street finding.

Chips are cut from the wafer at their nominal grid cells; the rendered
pattern may sit a few pixels off nominal, so street positions inside a
chip patch are recovered from the chip contour rather than assumed. The
chain is histogram equalization, binarization, erosion, border following,
then the side border centers of the biggest contour displaced outward by
half a street width.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import LayoutMismatch, NoContour
from .image import GrayImage
from .imgproc import (equalize_histogram, erode, extract_patch, follow_borders,
                      largest_contour, side_centers, threshold_binary)
from .synthwafer import WaferLayout, chip_position_truth

__all__ = ["TemplateLevel", "Orientation", "Template", "StreetROI",
           "segment_chips", "chip_position_truth", "locate_streets",
           "wafer_street_center", "chip_quantile_threshold", "STREET_OFFSETS"]


class TemplateLevel(enum.Enum):
    CHIP = "chip"
    STREET = "street"


class Orientation(enum.Enum):
    HORIZONTAL = "horizontal"  # street runs along x
    VERTICAL = "vertical"


# chip-relative street offsets in locate_streets output order
STREET_OFFSETS = ((0.0, -0.5), (0.5, 0.0), (0.0, 0.5), (-0.5, 0.0))


def chip_quantile_threshold(layout: WaferLayout) -> int:
    """Fixed post-equalization threshold separating chip from street.

    Equalization maps each gray level close to its histogram quantile, so
    within a chip-cell patch the chip body sits above the street-area
    quantile no matter how noisy the modes are. Otsu works on bimodal
    histograms but equalization deliberately flattens the histogram,
    which starves Otsu of a valley; the geometric quantile does not care.
    """
    p, sw = layout.chip_pitch_px, layout.street_width_px
    chip_frac = (p - sw) ** 2 / p ** 2
    return max(1, min(255, int(np.floor(255.0 * (1.0 - chip_frac) + 0.5))))


@dataclass(frozen=True)
class Template:
    """Reference geometry plus extraction settings for one level.

    threshold None selects the layout-derived quantile threshold; an
    explicit value pins the binarization threshold instead.
    """

    layout: WaferLayout
    patch_size: int
    level: TemplateLevel
    threshold: int | None = None
    erode_radius: int = 1

    def __post_init__(self):
        if self.patch_size < 8:
            raise ValueError(f"patch_size must be >= 8, got {self.patch_size}")
        if self.erode_radius < 1:
            raise ValueError("erode_radius must be >= 1")


@dataclass
class StreetROI:
    """One localized street region within a chip patch.

    grid_index is the chip-relative street offset (exactly one component
    is a half-integer); center_px is in chip-patch pixel coordinates.
    """

    patch: GrayImage
    grid_index: tuple[float, float]
    center_px: tuple[float, float]
    orientation: Orientation


def segment_chips(wafer: GrayImage, layout: WaferLayout):
    """Cut the wafer into nominal chip cells, raster order.

    Returns (grid_index, patch) pairs, one per chip of the grid,
    including outside chips. Raises LayoutMismatch when the image does
    not have the layout's dimensions.
    """
    w, h = layout.image_size()
    if (wafer.width, wafer.height) != (w, h):
        raise LayoutMismatch(
            f"wafer is {wafer.width}x{wafer.height}, layout expects {w}x{h}")
    out = []
    for chip in layout.chip_indices():
        left, top, right, bottom = layout.cell_bounds(chip)
        out.append((chip, GrayImage(wafer.pixels[top:bottom, left:right].copy())))
    return out


def locate_streets(chip_patch: GrayImage, tmpl: Template) -> list[StreetROI]:
    """Find the four streets around the chip in a chip-cell patch.

    Returns ROIs in top, right, bottom, left order. Street centers are
    the chip contour's side border centers pushed outward by half a
    street width (plus the erosion radius, which the contour lost).
    Raises NoContour when the patch has no structure to segment.
    """
    px = chip_patch.pixels
    if px.min() == px.max():
        raise NoContour("constant patch has no contour")
    eq = equalize_histogram(chip_patch)
    t = tmpl.threshold if tmpl.threshold is not None else chip_quantile_threshold(tmpl.layout)
    binary = threshold_binary(eq, t)
    eroded = erode(binary, tmpl.erode_radius)
    contours = follow_borders(eroded)
    if not contours:
        raise NoContour("no foreground component survived erosion")
    top, right, bottom, left = side_centers(largest_contour(contours))
    push = tmpl.layout.street_width_px / 2.0 + tmpl.erode_radius
    centers = [
        (top[0], top[1] - push),
        (right[0] + push, right[1]),
        (bottom[0], bottom[1] + push),
        (left[0] - push, left[1]),
    ]
    rois = []
    for offset, (cx, cy) in zip(STREET_OFFSETS, centers):
        orient = Orientation.HORIZONTAL if offset[0] == 0.0 else Orientation.VERTICAL
        patch = extract_patch(chip_patch, cx, cy, tmpl.patch_size)
        rois.append(StreetROI(patch=patch, grid_index=offset,
                              center_px=(cx, cy), orientation=orient))
    return rois


def wafer_street_center(layout: WaferLayout, chip: tuple[int, int],
                        roi: StreetROI) -> tuple[float, float]:
    """Translate a chip-patch street center into wafer pixel coordinates."""
    left, top, _, _ = layout.cell_bounds(chip)
    return left + roi.center_px[0], top + roi.center_px[1]

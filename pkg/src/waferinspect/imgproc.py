"""Classical image-processing primitives for street localization.

The chain used downstream is: histogram equalization, binary threshold
(Otsu by default), erosion, outer-border following, biggest contour,
per-side border centers. Everything here is implemented directly on the
raster; no external imaging library is involved.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateContour, EmptyInput
from .image import BinaryImage, GrayImage

# Clockwise 8-neighbourhood in screen coordinates (x right, y down),
# starting east. Border following scans in this order.
_DIRS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


@dataclass
class Contour:
    """Ordered border pixels of one connected component.

    ``points`` is an (n, 2) int array of (x, y) positions tracing the
    border exactly once around; consecutive points are 8-connected. A
    pixel appears twice where the border folds back over a one-pixel
    spur. ``closed`` marks a loop back to the start; the closing return
    is implied, not repeated.
    """

    points: np.ndarray
    closed: bool = True

    def __len__(self) -> int:
        return len(self.points)


def equalize_histogram(img: GrayImage) -> GrayImage:
    """Stretch the gray-level CDF to the full 0..255 range.

    Each value v maps to round((cdf(v) - cdf_min) / (N - cdf_min) * 255)
    with half-up rounding; a constant image is returned unchanged since
    the formula degenerates to 0/0. The mapping is monotone and the
    smallest occurring value always maps to 0.
    """
    hist = np.bincount(img.pixels.ravel(), minlength=256)
    cdf = np.cumsum(hist)
    n = img.pixels.size
    cdf_min = int(cdf[np.nonzero(hist)[0][0]])
    if n == cdf_min:
        return img.copy()
    lut = np.floor((cdf - cdf_min) * 255.0 / (n - cdf_min) + 0.5)
    lut = np.clip(lut, 0, 255).astype(np.uint8)
    return GrayImage(lut[img.pixels])


def otsu_threshold(img: GrayImage) -> int:
    """Threshold maximizing between-class variance for bit = (pixel >= t).

    Ties pick the smallest threshold.
    """
    hist = np.bincount(img.pixels.ravel(), minlength=256).astype(np.float64)
    n = hist.sum()
    levels = np.arange(256, dtype=np.float64)
    # class 0: values < t, class 1: values >= t, for t = 0..255
    w0 = np.concatenate(([0.0], np.cumsum(hist)[:-1]))
    s0 = np.concatenate(([0.0], np.cumsum(hist * levels)[:-1]))
    w1 = n - w0
    s1 = hist @ levels - s0
    with np.errstate(invalid="ignore", divide="ignore"):
        mu0 = np.where(w0 > 0, s0 / w0, 0.0)
        mu1 = np.where(w1 > 0, s1 / w1, 0.0)
    var_between = w0 * w1 * (mu0 - mu1) ** 2
    return int(np.argmax(var_between))


def threshold_binary(img: GrayImage, t: int | None = None) -> BinaryImage:
    """Binarize: bit = 1 iff pixel >= t. Without t, Otsu's criterion picks it."""
    if t is None:
        t = otsu_threshold(img)
    if not 0 <= t <= 255:
        raise ValueError(f"threshold {t} outside [0, 255]")
    return BinaryImage((img.pixels >= t).astype(np.uint8))


def erode(img: BinaryImage, se_radius: int = 1) -> BinaryImage:
    """Erosion with a square structuring element of side 2*se_radius+1.

    Out-of-bounds pixels count as background, so foreground touching the
    image edge erodes away. The result is always a subset of the input.
    """
    return BinaryImage(kernels.erode_binary(img.bits, se_radius))


def _components(bits: np.ndarray):
    """8-connected foreground components, yielded in raster order of
    their first pixel as (mask, first_pixel)."""
    h, w = bits.shape
    labels = np.zeros((h, w), dtype=np.int32)
    out = []
    next_id = 0
    for y in range(h):
        row = bits[y]
        for x in range(w):
            if row[x] and not labels[y, x]:
                next_id += 1
                labels[y, x] = next_id
                queue = deque([(x, y)])
                while queue:
                    cx, cy = queue.popleft()
                    for dx, dy in _DIRS:
                        nx, ny = cx + dx, cy + dy
                        if 0 <= nx < w and 0 <= ny < h and bits[ny, nx] and not labels[ny, nx]:
                            labels[ny, nx] = next_id
                            queue.append((nx, ny))
                out.append(((x, y), next_id))
    return labels, out


def _trace_border(bits: np.ndarray, labels: np.ndarray, comp_id: int, start):
    """Clockwise Moore trace of one component's outer border.

    Returns the border walk, one loop exactly, without the closing
    repetition of the start pixel. The start pixel is the component's
    first raster pixel, whose west neighbour is guaranteed to be
    background or off-image.
    """
    h, w = bits.shape
    x0, y0 = start

    def scan(px, py, back_dir):
        # first own-component neighbour clockwise after the backtrack direction
        for k in range(1, 9):
            d = (back_dir + k) % 8
            nx, ny = px + _DIRS[d][0], py + _DIRS[d][1]
            if 0 <= nx < w and 0 <= ny < h and labels[ny, nx] == comp_id:
                return d
        return None

    first_dir = scan(x0, y0, 4)  # backtrack starts west of the start pixel
    if first_dir is None:
        return [(x0, y0)]

    seq = [(x0, y0)]
    px, py = x0, y0
    back_dir = 4
    start_state = None
    max_steps = 8 * int((labels == comp_id).sum()) + 8
    for _ in range(max_steps):
        d = scan(px, py, back_dir)
        if (px, py) == (x0, y0):
            if start_state is None:
                start_state = d
            elif d == start_state:
                break
        qx, qy = px + _DIRS[d][0], py + _DIRS[d][1]
        # next scan starts from the last background cell examined, which
        # sits one step counterclockwise of the found pixel
        rx, ry = px + _DIRS[(d - 1) % 8][0], py + _DIRS[(d - 1) % 8][1]
        back_dir = _DIRS.index((rx - qx, ry - qy))
        seq.append((qx, qy))
        px, py = qx, qy
    # the loop exits right after stepping back onto the start; drop that
    # closing occurrence so the walk covers the border exactly once
    if len(seq) > 1 and seq[-1] == seq[0]:
        seq.pop()
    return seq


def follow_borders(img: BinaryImage) -> list[Contour]:
    """Outer border of every 8-connected foreground component.

    Components are reported in raster order of their first pixel; each
    border is walked clockwise from that pixel, once around. Every
    returned point is a foreground pixel 4-adjacent to background or to
    the image edge; spur pixels appear once per fold of the border.
    """
    bits = img.bits
    labels, comps = _components(bits)
    contours = []
    for start, comp_id in comps:
        pts = _trace_border(bits, labels, comp_id, start)
        contours.append(Contour(np.array(pts, dtype=np.int32), closed=True))
    return contours


def contour_area(c: Contour) -> float:
    """Shoelace area of the traced polygon through the pixel centers."""
    pts = np.asarray(c.points, dtype=np.float64)
    if len(pts) < 3:
        return 0.0
    x = pts[:, 0]
    y = pts[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def largest_contour(contours: list[Contour]) -> Contour:
    """Contour with the largest enclosed area; ties go to the contour
    whose start point comes first in raster order."""
    if not contours:
        raise EmptyInput("largest_contour: no contours given")
    best = None
    best_key = None
    for c in contours:
        x0, y0 = int(c.points[0][0]), int(c.points[0][1])
        key = (contour_area(c), -y0, -x0)
        if best is None or key > best_key:
            best, best_key = c, key
    return best


# Tolerance band, as a fraction of the bounding-box extent, for collecting
# the points of one side. A plain coordinate==extreme rule collapses to a
# corner sliver once the contour is rotated by even a degree.
_SIDE_BAND_FRACTION = 0.02


def side_centers(c: Contour):
    """Centers of the four bounding-box sides of a contour.

    For each side, the contour points within a small band of the extreme
    coordinate are collected and the midpoint of their span along the
    side is returned. Order: top, right, bottom, left, as (x, y) floats.
    """
    pts = np.asarray(c.points)
    xmin, ymin = pts.min(axis=0)
    xmax, ymax = pts.max(axis=0)
    if xmin == xmax or ymin == ymax:
        raise DegenerateContour("contour bounding box has zero area")

    def span_mid(vals):
        return (float(vals.min()) + float(vals.max())) / 2.0

    band_x = max(1, int(np.ceil(_SIDE_BAND_FRACTION * (xmax - xmin))))
    band_y = max(1, int(np.ceil(_SIDE_BAND_FRACTION * (ymax - ymin))))
    top = (span_mid(pts[pts[:, 1] <= ymin + band_y, 0]), float(ymin))
    right = (float(xmax), span_mid(pts[pts[:, 0] >= xmax - band_x, 1]))
    bottom = (span_mid(pts[pts[:, 1] >= ymax - band_y, 0]), float(ymax))
    left = (float(xmin), span_mid(pts[pts[:, 0] <= xmin + band_x, 1]))
    return top, right, bottom, left


def extract_patch(img: GrayImage, cx: float, cy: float, side: int) -> GrayImage:
    """Square crop centered on (cx, cy), edge-replicated where it leaves
    the image."""
    x0 = int(round(cx)) - side // 2
    y0 = int(round(cy)) - side // 2
    xs = np.clip(np.arange(x0, x0 + side), 0, img.width - 1)
    ys = np.clip(np.arange(y0, y0 + side), 0, img.height - 1)
    return GrayImage(img.pixels[np.ix_(ys, xs)])


def resize_box_mean(img: GrayImage, factor: int) -> GrayImage:
    """Downscale by an integer factor with box averaging (half-up rounding)."""
    if factor == 1:
        return img.copy()
    h, w = img.pixels.shape
    if h % factor or w % factor:
        raise ValueError(f"image {w}x{h} not divisible by factor {factor}")
    blocks = img.pixels.reshape(h // factor, factor, w // factor, factor).astype(np.float64)
    means = blocks.mean(axis=(1, 3))
    return GrayImage(np.clip(np.floor(means + 0.5), 0, 255).astype(np.uint8))

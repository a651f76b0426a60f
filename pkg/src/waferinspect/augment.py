"""Level-parameterized affine data augmentation.

Level l yields l augmented copies per original, each built from one
bilinear warp whose parameters are drawn from ranges that widen linearly
with l: rotation within l*2 degrees, translation within l*5% of the
patch dimensions, scaling within l*2%, and a coin-flip reflection along
the x axis. Level 0 disables augmentation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .image import GrayImage
from .seeding import derive_seed

ROTATION_DEG_PER_LEVEL = 2.0
TRANSLATE_FRAC_PER_LEVEL = 0.05
SCALE_FRAC_PER_LEVEL = 0.02


@dataclass(frozen=True)
class AugmentationLevel:
    l: int

    def __post_init__(self):
        if self.l < 0:
            raise ValueError(f"augmentation level must be >= 0, got {self.l}")


@dataclass(frozen=True)
class AffineParams:
    """One sampled transform; applied rotation, translation, scale, flip."""

    rotation_deg: float
    translate_frac: tuple[float, float]
    scale: float
    reflect: bool


def _as_level(level) -> int:
    l = level.l if isinstance(level, AugmentationLevel) else int(level)
    if l < 0:
        raise ValueError(f"augmentation level must be >= 0, got {l}")
    return l


def sample_params(level, rng: np.random.Generator) -> AffineParams:
    """Draw one parameter set at the given level. Draw order is fixed:
    rotation, x shift, y shift, scale, reflection coin."""
    l = _as_level(level)
    rot = float(rng.uniform(-ROTATION_DEG_PER_LEVEL * l, ROTATION_DEG_PER_LEVEL * l))
    tx = float(rng.uniform(-TRANSLATE_FRAC_PER_LEVEL * l, TRANSLATE_FRAC_PER_LEVEL * l))
    ty = float(rng.uniform(-TRANSLATE_FRAC_PER_LEVEL * l, TRANSLATE_FRAC_PER_LEVEL * l))
    scale = float(rng.uniform(1.0 - SCALE_FRAC_PER_LEVEL * l, 1.0 + SCALE_FRAC_PER_LEVEL * l))
    reflect = bool(rng.random() < 0.5)
    return AffineParams(rot, (tx, ty), scale, reflect)


def _forward_matrix(params: AffineParams, width: int, height: int) -> np.ndarray:
    """3x3 forward map composing rotation, translation, scale, flip,
    each about the patch center."""
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0
    a = math.radians(params.rotation_deg)
    ca, sa = math.cos(a), math.sin(a)

    def about_center(m2, t):
        m = np.eye(3)
        m[:2, :2] = m2
        m[0, 2] = t[0] + cx - m2[0, 0] * cx - m2[0, 1] * cy
        m[1, 2] = t[1] + cy - m2[1, 0] * cx - m2[1, 1] * cy
        return m

    rot = about_center(np.array([[ca, -sa], [sa, ca]]), (0.0, 0.0))
    tra = about_center(np.eye(2), (params.translate_frac[0] * width,
                                   params.translate_frac[1] * height))
    sca = about_center(np.array([[params.scale, 0.0], [0.0, params.scale]]), (0.0, 0.0))
    fwd = sca @ tra @ rot
    if params.reflect:
        fwd = about_center(np.array([[1.0, 0.0], [0.0, -1.0]]), (0.0, 0.0)) @ fwd
    return fwd


def apply_affine(img: GrayImage, params: AffineParams) -> GrayImage:
    """Warp with one bilinear resample; borders replicate edge pixels."""
    fwd = _forward_matrix(params, img.width, img.height)
    inv = np.linalg.inv(fwd)[:2]
    warped = kernels.warp_affine_bilinear(img.pixels.astype(np.float64), inv)
    return GrayImage(np.clip(np.floor(warped + 0.5), 0, 255).astype(np.uint8))


def augment_one(img: GrayImage, level, seed: int) -> list[GrayImage]:
    """l augmented copies of one patch; level 0 gives an empty list.
    Copy k is deterministic under (seed, k)."""
    l = _as_level(level)
    out = []
    for k in range(l):
        params = sample_params(l, np.random.default_rng((seed, k)))
        out.append(apply_affine(img, params))
    return out


def augment_dataset(patches: list, level, seed: int) -> list:
    """Originals plus l copies each: |output| = |input| * (l + 1).

    patches are (GrayImage, label) pairs; copies keep their source label.
    Item i derives its stream from (seed, i), so per-item work is order
    independent.
    """
    l = _as_level(level)
    out = list(patches)
    for i, (img, label) in enumerate(patches):
        for copy in augment_one(img, l, derive_seed(seed, i)):
            out.append((copy, label))
    return out

"""Shared fixtures: small layouts and rendered wafers reused across files."""

import numpy as np
import pytest

from waferinspect.image import GrayImage
from waferinspect.synthwafer import WaferLayout, generate_wafer


def make_tiny_layout(**overrides) -> WaferLayout:
    """3x3 grid, 96x96 px, clean render: 5 inside chips, 4 corner chips out."""
    kw = dict(wafer_radius_px=45.0, chip_pitch_px=24, street_width_px=4,
              chips_x=3, chips_y=3, noise_sigma=0.0, max_offset_px=0)
    kw.update(overrides)
    return WaferLayout(**kw)


@pytest.fixture(scope="session")
def tiny_layout() -> WaferLayout:
    return make_tiny_layout()


@pytest.fixture(scope="session")
def clean_wafer(tiny_layout):
    """Defect-free noise-free wafer with its ground truth."""
    return generate_wafer(tiny_layout, [], seed=3)


def random_gray(rng: np.random.Generator, h: int, w: int) -> GrayImage:
    return GrayImage(rng.integers(0, 256, size=(h, w), dtype=np.uint8))

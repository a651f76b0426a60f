"""Raster containers and PGM (P5) input/output.

GrayImage wraps a 2-D uint8 array in row-major order; BinaryImage wraps
a 2-D {0,1} uint8 array. Pixel (x, y) is column x of row y, so ``pixels[y, x]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IoFailure


@dataclass
class GrayImage:
    """2-D gray-level raster, values 0..255."""

    pixels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.pixels)
        if a.ndim != 2 or a.size == 0:
            raise ValueError("GrayImage needs a non-empty 2-D array")
        if a.dtype != np.uint8:
            if a.min() < 0 or a.max() > 255:
                raise ValueError("gray levels must lie in [0, 255]")
            a = a.astype(np.uint8)
        self.pixels = a

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def copy(self) -> "GrayImage":
        return GrayImage(self.pixels.copy())

    def __eq__(self, other) -> bool:
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)


@dataclass
class BinaryImage:
    """2-D bit raster; 1 marks foreground."""

    bits: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.bits)
        if a.ndim != 2 or a.size == 0:
            raise ValueError("BinaryImage needs a non-empty 2-D array")
        a = a.astype(np.uint8)
        if not np.isin(a, (0, 1)).all():
            raise ValueError("bits must be 0 or 1")
        self.bits = a

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, BinaryImage) and np.array_equal(self.bits, other.bits)


def write_pgm(img: GrayImage, path) -> None:
    """Write a binary PGM (P5, maxval 255). Header is fixed-format so
    identical images produce identical bytes."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(img.pixels.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write PGM {path}: {exc}") from exc


def read_pgm(path) -> GrayImage:
    """Read a binary PGM (P5, maxval 255), tolerating comment lines."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read PGM {path}: {exc}") from exc

    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise IoFailure(f"truncated PGM header: {path}")
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        if data[pos : pos + 1].isspace():
            pos += 1
            continue
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise IoFailure(f"not a P5 PGM: {path}")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise IoFailure(f"unsupported maxval {maxval}: {path}")
    if len(data) - pos < width * height:
        raise IoFailure(f"truncated PGM raster: {path}")
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return GrayImage(raster.reshape(height, width).copy())

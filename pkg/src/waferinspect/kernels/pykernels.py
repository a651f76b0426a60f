"""Pure-numpy implementations of the hot kernels.

This is the fallback backend; the compiled extension in _ckernels.pyx
provides the same functions with identical semantics. Layouts:
activations are (N, C, H, W), conv weights are (F, C, 3, 3).
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


def _check_conv_shapes(x, w, b):
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeMismatch(f"conv2d expects 4-D tensors, got {x.shape} and {w.shape}")
    if w.shape[2:] != (3, 3):
        raise ShapeMismatch(f"conv2d kernels must be 3x3, got {w.shape[2:]}")
    if x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"channel mismatch: input {x.shape[1]}, kernels {w.shape[1]}")
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeMismatch(f"bias shape {b.shape} does not match {w.shape[0]} kernels")


def _im2col(x: np.ndarray, pad: int) -> np.ndarray:
    """Gather all 3x3 patches into rows: (N*Ho*Wo, C*9)."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (3, 3), axis=(2, 3))
    n, c, ho, wo = win.shape[:4]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * 9), ho, wo


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, pad: int) -> np.ndarray:
    """3x3 stride-1 cross-correlation. pad=1 keeps H/W, pad=0 shrinks by 2."""
    _check_conv_shapes(x, w, b)
    if x.shape[2] + 2 * pad < 3 or x.shape[3] + 2 * pad < 3:
        raise ShapeMismatch(f"input {x.shape[2:]} too small for 3x3 valid window")
    cols, ho, wo = _im2col(x, pad)
    out = cols @ w.reshape(w.shape[0], -1).T
    if b is not None:
        out += b
    return out.reshape(x.shape[0], ho, wo, w.shape[0]).transpose(0, 3, 1, 2).copy()


def conv2d_backward_weights(x: np.ndarray, dy: np.ndarray, pad: int):
    """Gradients (dw, db) of the forward correlation."""
    cols, ho, wo = _im2col(x, pad)
    f = dy.shape[1]
    dyr = dy.transpose(0, 2, 3, 1).reshape(-1, f)
    dw = (dyr.T @ cols).reshape(f, x.shape[1], 3, 3)
    db = dy.sum(axis=(0, 2, 3))
    return dw, db


def conv2d_backward_input(dy: np.ndarray, w: np.ndarray, pad: int) -> np.ndarray:
    """Gradient w.r.t. the conv input: full correlation with rotated kernels."""
    w_rot = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return conv2d_forward(dy, w_rot, None, 2 - pad)


def maxpool2x2_forward(x: np.ndarray):
    """2x2 stride-2 max pool. Returns (out, argmax) where argmax holds the
    in-window index 0..3 of the first maximum (for the backward pass)."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeMismatch(f"maxpool2x2 needs even H and W, got {h}x{w}")
    r = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, h // 2, w // 2, 4
    )
    arg = r.argmax(axis=-1)
    out = np.take_along_axis(r, arg[..., None], axis=-1)[..., 0]
    return out, arg.astype(np.int8)


def maxpool2x2_backward(dy: np.ndarray, argmax: np.ndarray) -> np.ndarray:
    """Scatter pooled gradients back to the winning positions."""
    n, c, ho, wo = dy.shape
    dwin = np.zeros((n, c, ho, wo, 4), dtype=dy.dtype)
    np.put_along_axis(dwin, argmax[..., None].astype(np.intp), dy[..., None], axis=-1)
    return (
        dwin.reshape(n, c, ho, wo, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, ho * 2, wo * 2)
        .copy()
    )


def erode_binary(bits: np.ndarray, radius: int) -> np.ndarray:
    """Binary erosion with a square structuring element of side 2*radius+1.
    Out-of-bounds counts as background."""
    if radius < 1:
        raise ValueError("se radius must be >= 1")
    side = 2 * radius + 1
    padded = np.pad(bits, radius)
    win = np.lib.stride_tricks.sliding_window_view(padded, (side, side))
    return win.min(axis=(2, 3)).astype(np.uint8)


def warp_affine_bilinear(src: np.ndarray, inv: np.ndarray) -> np.ndarray:
    """Sample src at inverse-mapped coordinates with bilinear interpolation.

    inv is the 2x3 matrix taking output pixel coords to source coords.
    Coordinates clamp to the image, which replicates edge pixels.
    """
    h, w = src.shape
    ys, xs = np.mgrid[0:h, 0:w]
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    sx = np.clip(sx, 0.0, w - 1.0)
    sy = np.clip(sy, 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    s = src.astype(np.float64)
    top = s[y0, x0] * (1.0 - fx) + s[y0, x1] * fx
    bot = s[y1, x0] * (1.0 - fx) + s[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy

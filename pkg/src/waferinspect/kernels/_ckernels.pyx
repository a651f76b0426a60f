# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the pure-numpy kernels in pykernels.py.

Same names, same semantics, same error behavior; all floating point work
is float64. The parity test suite holds both backends to each other.
"""

import numpy as np

from libc.math cimport floor

from ..errors import ShapeMismatch
from .pykernels import _check_conv_shapes


def _as_f64_4d(arr):
    return np.ascontiguousarray(arr, dtype=np.float64)


def conv2d_forward(x, w, b, int pad):
    """3x3 stride-1 cross-correlation. pad=1 keeps H/W, pad=0 shrinks by 2."""
    _check_conv_shapes(x, w, b)
    if x.shape[2] + 2 * pad < 3 or x.shape[3] + 2 * pad < 3:
        raise ShapeMismatch(f"input {x.shape[2:]} too small for 3x3 valid window")
    xp = _as_f64_4d(np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x)
    cdef double[:, :, :, ::1] xv = xp
    cdef double[:, :, :, ::1] wv = _as_f64_4d(w)
    cdef Py_ssize_t N = xv.shape[0], C = xv.shape[1]
    cdef Py_ssize_t Ho = xv.shape[2] - 2, Wo = xv.shape[3] - 2
    cdef Py_ssize_t F = wv.shape[0]
    out = np.zeros((N, F, Ho, Wo), dtype=np.float64)
    cdef double[:, :, :, ::1] ov = out
    cdef Py_ssize_t n, f, c, ky, kx, i, j
    cdef double wval
    with nogil:
        for n in range(N):
            for f in range(F):
                for c in range(C):
                    for ky in range(3):
                        for kx in range(3):
                            wval = wv[f, c, ky, kx]
                            for i in range(Ho):
                                for j in range(Wo):
                                    ov[n, f, i, j] += wval * xv[n, c, i + ky, j + kx]
    if b is not None:
        out += np.asarray(b, dtype=np.float64).reshape(1, F, 1, 1)
    return out


def conv2d_backward_weights(x, dy, int pad):
    """Gradients (dw, db) of the forward correlation."""
    xp = _as_f64_4d(np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x)
    cdef double[:, :, :, ::1] xv = xp
    cdef double[:, :, :, ::1] dyv = _as_f64_4d(dy)
    cdef Py_ssize_t N = xv.shape[0], C = xv.shape[1]
    cdef Py_ssize_t F = dyv.shape[1], Ho = dyv.shape[2], Wo = dyv.shape[3]
    dw = np.zeros((F, C, 3, 3), dtype=np.float64)
    cdef double[:, :, :, ::1] dwv = dw
    cdef Py_ssize_t n, f, c, ky, kx, i, j
    cdef double acc
    with nogil:
        for f in range(F):
            for c in range(C):
                for ky in range(3):
                    for kx in range(3):
                        acc = 0.0
                        for n in range(N):
                            for i in range(Ho):
                                for j in range(Wo):
                                    acc += dyv[n, f, i, j] * xv[n, c, i + ky, j + kx]
                        dwv[f, c, ky, kx] = acc
    db = np.asarray(dy, dtype=np.float64).sum(axis=(0, 2, 3))
    return dw, db


def conv2d_backward_input(dy, w, int pad):
    """Gradient w.r.t. the conv input: full correlation with rotated kernels."""
    w = np.asarray(w)
    w_rot = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return conv2d_forward(dy, w_rot, None, 2 - pad)


def maxpool2x2_forward(x):
    """2x2 stride-2 max pool. Returns (out, argmax) where argmax holds the
    in-window index 0..3 of the first maximum (for the backward pass)."""
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeMismatch(f"maxpool2x2 needs even H and W, got {x.shape[2]}x{x.shape[3]}")
    cdef double[:, :, :, ::1] xv = _as_f64_4d(x)
    cdef Py_ssize_t N = xv.shape[0], C = xv.shape[1]
    cdef Py_ssize_t Ho = xv.shape[2] // 2, Wo = xv.shape[3] // 2
    out = np.empty((N, C, Ho, Wo), dtype=np.float64)
    arg = np.empty((N, C, Ho, Wo), dtype=np.int8)
    cdef double[:, :, :, ::1] ov = out
    cdef signed char[:, :, :, ::1] av = arg
    cdef Py_ssize_t n, c, i, j
    cdef double best, v
    cdef signed char k
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(Ho):
                    for j in range(Wo):
                        best = xv[n, c, 2 * i, 2 * j]
                        k = 0
                        v = xv[n, c, 2 * i, 2 * j + 1]
                        if v > best:
                            best = v
                            k = 1
                        v = xv[n, c, 2 * i + 1, 2 * j]
                        if v > best:
                            best = v
                            k = 2
                        v = xv[n, c, 2 * i + 1, 2 * j + 1]
                        if v > best:
                            best = v
                            k = 3
                        ov[n, c, i, j] = best
                        av[n, c, i, j] = k
    return out, arg


def maxpool2x2_backward(dy, argmax):
    """Scatter pooled gradients back to the winning positions."""
    cdef double[:, :, :, ::1] dyv = _as_f64_4d(dy)
    cdef signed char[:, :, :, ::1] av = np.ascontiguousarray(argmax, dtype=np.int8)
    cdef Py_ssize_t N = dyv.shape[0], C = dyv.shape[1]
    cdef Py_ssize_t Ho = dyv.shape[2], Wo = dyv.shape[3]
    dx = np.zeros((N, C, Ho * 2, Wo * 2), dtype=np.float64)
    cdef double[:, :, :, ::1] dxv = dx
    cdef Py_ssize_t n, c, i, j
    cdef signed char k
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(Ho):
                    for j in range(Wo):
                        k = av[n, c, i, j]
                        dxv[n, c, 2 * i + k // 2, 2 * j + k % 2] = dyv[n, c, i, j]
    return dx


def erode_binary(bits, int radius):
    """Binary erosion with a square structuring element of side 2*radius+1.
    Out-of-bounds counts as background."""
    if radius < 1:
        raise ValueError("se radius must be >= 1")
    padded = np.ascontiguousarray(np.pad(np.asarray(bits, dtype=np.uint8), radius))
    cdef unsigned char[:, ::1] pv = padded
    cdef Py_ssize_t H = pv.shape[0] - 2 * radius, W = pv.shape[1] - 2 * radius
    out = np.empty((H, W), dtype=np.uint8)
    cdef unsigned char[:, ::1] ov = out
    cdef Py_ssize_t i, j, a, b
    cdef unsigned char m
    with nogil:
        for i in range(H):
            for j in range(W):
                m = 1
                for a in range(2 * radius + 1):
                    if m == 0:
                        break
                    for b in range(2 * radius + 1):
                        if pv[i + a, j + b] < m:
                            m = pv[i + a, j + b]
                            if m == 0:
                                break
                ov[i, j] = m
    return out


def warp_affine_bilinear(src, inv):
    """Sample src at inverse-mapped coordinates with bilinear interpolation.

    inv is the 2x3 matrix taking output pixel coords to source coords.
    Coordinates clamp to the image, which replicates edge pixels.
    """
    cdef double[:, ::1] sv = np.ascontiguousarray(src, dtype=np.float64)
    cdef double[:, ::1] mv = np.ascontiguousarray(inv, dtype=np.float64)
    cdef Py_ssize_t H = sv.shape[0], W = sv.shape[1]
    out = np.empty((H, W), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, x0, y0, x1, y1
    cdef double sx, sy, fx, fy, top, bot
    with nogil:
        for i in range(H):
            for j in range(W):
                sx = mv[0, 0] * j + mv[0, 1] * i + mv[0, 2]
                sy = mv[1, 0] * j + mv[1, 1] * i + mv[1, 2]
                if sx < 0.0:
                    sx = 0.0
                elif sx > W - 1.0:
                    sx = W - 1.0
                if sy < 0.0:
                    sy = 0.0
                elif sy > H - 1.0:
                    sy = H - 1.0
                x0 = <Py_ssize_t> floor(sx)
                y0 = <Py_ssize_t> floor(sy)
                x1 = x0 + 1 if x0 + 1 < W else W - 1
                y1 = y0 + 1 if y0 + 1 < H else H - 1
                fx = sx - x0
                fy = sy - y0
                top = sv[y0, x0] * (1.0 - fx) + sv[y0, x1] * fx
                bot = sv[y1, x0] * (1.0 - fx) + sv[y1, x1] * fx
                ov[i, j] = top * (1.0 - fy) + bot * fy
    return out

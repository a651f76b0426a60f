"""Hot numerical kernels with a compiled core and a pure-numpy fallback.

At import time the compiled extension (_ckernels) is preferred; when it
is absent the numpy implementations take over. ``BACKEND`` reports which
one is active. Both backends are importable directly for parity tests
and benchmarks (`pykernels`, `ckernels`).
"""

from . import pykernels

try:
    from . import _ckernels as ckernels

    BACKEND = "compiled"
    _impl = ckernels
except ImportError:  # extension not built
    ckernels = None
    BACKEND = "python"
    _impl = pykernels

conv2d_forward = _impl.conv2d_forward
conv2d_backward_input = _impl.conv2d_backward_input
conv2d_backward_weights = _impl.conv2d_backward_weights
maxpool2x2_forward = _impl.maxpool2x2_forward
maxpool2x2_backward = _impl.maxpool2x2_backward
erode_binary = _impl.erode_binary
warp_affine_bilinear = _impl.warp_affine_bilinear

__all__ = [
    "BACKEND",
    "ckernels",
    "pykernels",
    "conv2d_forward",
    "conv2d_backward_input",
    "conv2d_backward_weights",
    "maxpool2x2_forward",
    "maxpool2x2_backward",
    "erode_binary",
    "warp_affine_bilinear",
]

"""Timing comparison of the compiled kernel extension vs the numpy
fallback, with a parity check on every measured call.

Run as: python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from waferinspect.kernels import BACKEND, ckernels, pykernels


def _time(fn, *args, repeats=5):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _diff(a, b):
    if isinstance(a, tuple):
        return max(_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=np.float64)
                               - np.asarray(b, dtype=np.float64))))


def cases():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(16, 8, 32, 32))
    w = rng.normal(size=(16, 8, 3, 3))
    b = rng.normal(size=16)
    dy = rng.normal(size=(16, 16, 32, 32))
    yield "conv2d_forward", (x, w, b, 1)
    yield "conv2d_backward_weights", (x, dy, 1)
    yield "conv2d_backward_input", (dy, w, 1)
    pooled, argmax = pykernels.maxpool2x2_forward(x)
    yield "maxpool2x2_forward", (x,)
    yield "maxpool2x2_backward", (rng.normal(size=pooled.shape), argmax)
    bits = (rng.random((512, 512)) < 0.5).astype(np.uint8)
    yield "erode_binary", (bits, 2)
    src = rng.uniform(0, 255, size=(256, 256))
    inv = np.array([[1.01, 0.02, -1.5], [-0.02, 0.99, 2.0], [0, 0, 1.0]])
    yield "warp_affine_bilinear", (src, inv)


def main():
    print(f"active backend: {BACKEND}")
    if ckernels is None:
        print("compiled extension not built; timing the numpy fallback only")
    header = f"{'kernel':26s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s} {'max diff':>10s}"
    print(header)
    print("-" * len(header))
    for name, args in cases():
        t_py, out_py = _time(getattr(pykernels, name), *args)
        if ckernels is None:
            print(f"{name:26s} {t_py * 1e3:9.2f}ms {'-':>10s} {'-':>8s} {'-':>10s}")
            continue
        t_c, out_c = _time(getattr(ckernels, name), *args)
        diff = _diff(out_py, out_c)
        print(f"{name:26s} {t_py * 1e3:9.2f}ms {t_c * 1e3:9.2f}ms "
              f"{t_py / t_c:7.1f}x {diff:10.2e}")


if __name__ == "__main__":
    main()

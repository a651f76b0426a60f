"""Backend parity and gradient correctness for the hot kernels."""

import numpy as np
import pytest

import gradcheck
from oracles import conv2d_reference, maxpool_reference
from waferinspect import kernels, nn
from waferinspect.kernels import pykernels

requires_compiled = pytest.mark.skipif(
    kernels.ckernels is None, reason="compiled backend not built"
)


def _conv_instance(seed, pad):
    rng = np.random.default_rng(seed)
    n, c_in, c_out = 2, int(rng.integers(1, 4)), int(rng.integers(1, 4))
    h, w = int(rng.integers(3, 9)), int(rng.integers(3, 9))
    x = rng.standard_normal((n, c_in, h, w))
    w_ = rng.standard_normal((c_out, c_in, 3, 3))
    b = rng.standard_normal(c_out)
    oh, ow = h + 2 * pad - 2, w + 2 * pad - 2
    dy = rng.standard_normal((n, c_out, oh, ow))
    return x, w_, b, dy


class TestBackendSelection:
    def test_backend_flag_matches_extension(self):
        assert kernels.BACKEND in ("compiled", "python")
        expected = "python" if kernels.ckernels is None else "compiled"
        assert kernels.BACKEND == expected

    def test_exported_functions_come_from_active_backend(self):
        impl = pykernels if kernels.ckernels is None else kernels.ckernels
        assert kernels.conv2d_forward is impl.conv2d_forward
        assert kernels.erode_binary is impl.erode_binary


class TestForwardValues:
    @pytest.mark.parametrize("pad", [0, 1])
    def test_conv_forward_matches_reference(self, pad):
        for seed in range(6):
            x, w, b, _ = _conv_instance((20, seed), pad)
            out = kernels.conv2d_forward(x, w, b, pad)
            np.testing.assert_allclose(out, conv2d_reference(x, w, b, pad),
                                       rtol=1e-12, atol=1e-12)

    def test_conv_forward_without_bias(self):
        x, w, _, _ = _conv_instance((21, 0), 1)
        out = kernels.conv2d_forward(x, w, None, 1)
        np.testing.assert_allclose(out, conv2d_reference(x, w, None, 1),
                                   rtol=1e-12, atol=1e-12)

    def test_maxpool_forward_matches_reference(self):
        rng = np.random.default_rng(22)
        for _ in range(6):
            x = rng.standard_normal((2, 3, 6, 8))
            out, arg = kernels.maxpool2x2_forward(x)
            np.testing.assert_array_equal(out, maxpool_reference(x))
            assert arg.shape == out.shape
            assert set(np.unique(arg)) <= {0, 1, 2, 3}

    def test_maxpool_backward_scatters_to_winner(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        out, arg = kernels.maxpool2x2_forward(x)
        assert out[0, 0, 0, 0] == 4.0
        dx = kernels.maxpool2x2_backward(np.full((1, 1, 1, 1), 5.0), arg)
        np.testing.assert_array_equal(dx, [[[[0.0, 0.0], [0.0, 5.0]]]])


@requires_compiled
class TestBackendParity:
    """The compiled extension and the numpy fallback must agree bitwise-close."""

    @pytest.mark.parametrize("pad", [0, 1])
    def test_conv_forward(self, pad):
        for seed in range(8):
            x, w, b, _ = _conv_instance((30, seed), pad)
            np.testing.assert_allclose(
                kernels.ckernels.conv2d_forward(x, w, b, pad),
                pykernels.conv2d_forward(x, w, b, pad),
                rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("pad", [0, 1])
    def test_conv_backward_weights(self, pad):
        for seed in range(8):
            x, w, b, dy = _conv_instance((31, seed), pad)
            dw_c, db_c = kernels.ckernels.conv2d_backward_weights(x, dy, pad)
            dw_p, db_p = pykernels.conv2d_backward_weights(x, dy, pad)
            np.testing.assert_allclose(dw_c, dw_p, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(db_c, db_p, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("pad", [0, 1])
    def test_conv_backward_input(self, pad):
        for seed in range(8):
            x, w, b, dy = _conv_instance((32, seed), pad)
            np.testing.assert_allclose(
                kernels.ckernels.conv2d_backward_input(dy, w, pad),
                pykernels.conv2d_backward_input(dy, w, pad),
                rtol=1e-10, atol=1e-12)

    def test_maxpool_roundtrip(self):
        rng = np.random.default_rng(33)
        for _ in range(8):
            x = rng.standard_normal((2, 2, 8, 6))
            out_c, arg_c = kernels.ckernels.maxpool2x2_forward(x)
            out_p, arg_p = pykernels.maxpool2x2_forward(x)
            np.testing.assert_array_equal(out_c, out_p)
            np.testing.assert_array_equal(arg_c, arg_p)
            dy = rng.standard_normal(out_c.shape)
            np.testing.assert_array_equal(
                kernels.ckernels.maxpool2x2_backward(dy, arg_c),
                pykernels.maxpool2x2_backward(dy, arg_p))

    def test_erode(self):
        rng = np.random.default_rng(34)
        for radius in (1, 2, 3):
            bits = (rng.random((20, 17)) < 0.7).astype(np.uint8)
            np.testing.assert_array_equal(
                kernels.ckernels.erode_binary(bits, radius),
                pykernels.erode_binary(bits, radius))

    def test_warp(self):
        rng = np.random.default_rng(35)
        for _ in range(8):
            src = rng.uniform(0.0, 255.0, (19, 23))
            angle = rng.uniform(-0.3, 0.3)
            inv = np.array([
                [np.cos(angle), -np.sin(angle), rng.uniform(-3, 3)],
                [np.sin(angle), np.cos(angle), rng.uniform(-3, 3)],
            ])
            np.testing.assert_allclose(
                kernels.ckernels.warp_affine_bilinear(src, inv),
                pykernels.warp_affine_bilinear(src, inv),
                rtol=1e-10, atol=1e-10)


class TestGradients:
    """Analytic backward vs central differences, every layer type."""

    @pytest.mark.parametrize("layer_name", sorted(gradcheck.LAYER_CASES))
    def test_layer_gradients(self, layer_name):
        case = gradcheck.LAYER_CASES[layer_name]
        worst = max(case(k) for k in range(5))
        assert worst < 1e-4, f"{layer_name} gradient error {worst:.3e}"

    def test_softmax_xent_gradient(self):
        worst = max(gradcheck.softmax_xent_case(k) for k in range(5))
        assert worst < 1e-6, f"softmax_xent gradient error {worst:.3e}"

    def test_network_end_to_end_gradient(self):
        # spot-check a few input coordinates through the whole stack
        cfg = nn.NetworkConfig(block_widths=(2, 2, 2), conv_dropout=0.0,
                               dense1_units=8, dense_dropout=0.0,
                               n_classes=2, input_hw=(8, 8))
        net = nn.Network(cfg, seed=40)
        rng = np.random.default_rng(41)
        x = rng.standard_normal((1, 1, 8, 8))
        target = 1

        def loss_of(arr):
            logits = net.forward(arr, nn.Mode.INFER)
            return nn.softmax_xent(logits[0], target)[0]

        logits = net.forward(x, nn.Mode.INFER)
        _, _, dlogits = nn._softmax_xent_batch(logits, np.array([target]))
        dx = net.backward(dlogits)

        eps = 1e-5
        for (iy, ix) in [(0, 0), (3, 4), (7, 7), (2, 6)]:
            x_hi = x.copy()
            x_hi[0, 0, iy, ix] += eps
            x_lo = x.copy()
            x_lo[0, 0, iy, ix] -= eps
            num = (loss_of(x_hi) - loss_of(x_lo)) / (2 * eps)
            denom = max(1.0, abs(num), abs(dx[0, 0, iy, ix]))
            assert abs(dx[0, 0, iy, ix] - num) / denom < 1e-4

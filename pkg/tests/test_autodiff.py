import numpy as np
import pytest

from dereflect import autodiff as ad
from dereflect.autodiff import ConvSpec, Tensor

from helpers import assert_grads_match, check_gradients, numeric_grad


def rand_tensor(rng, shape, low=0.2, high=1.5):
    return Tensor(rng.uniform(low, high, size=shape).astype(np.float32), requires_grad=True)


class TestForwardValues:
    def test_identity_kernel_conv(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.uniform(0, 1, size=(1, 1, 5, 5)).astype(np.float32))
        w = np.zeros((1, 1, 3, 3), dtype=np.float32)
        w[0, 0, 1, 1] = 1.0
        spec = ConvSpec(kernel_size=3, dilation=1, stride=1, padding=1, in_channels=1, out_channels=1)
        out = ad.conv2d(x, Tensor(w), Tensor(np.zeros(1, np.float32)), spec)
        np.testing.assert_array_equal(out.data, x.data)

    def test_conv_output_size_formula(self):
        spec = ConvSpec(kernel_size=3, dilation=2, stride=2, padding=1, in_channels=2, out_channels=3)
        x = Tensor(np.zeros((1, 2, 11, 9), np.float32))
        w = Tensor(np.zeros((3, 2, 3, 3), np.float32))
        b = Tensor(np.zeros(3, np.float32))
        out = ad.conv2d(x, w, b, spec)
        assert out.shape == (1, 3, *spec.out_size(11, 9))

    @pytest.mark.parametrize("k,dilation", [(1, 1), (3, 1), (3, 2), (3, 4), (5, 1), (5, 3), (7, 2)])
    def test_conv_preserves_dims_with_matched_padding(self, k, dilation):
        pad = dilation * (k - 1) // 2
        spec = ConvSpec(kernel_size=k, dilation=dilation, stride=1, padding=pad, in_channels=1, out_channels=1)
        x = Tensor(np.ones((1, 1, 20, 17), np.float32))
        out = ad.conv2d(x, Tensor(np.ones((1, 1, k, k), np.float32)), Tensor(np.zeros(1, np.float32)), spec)
        assert out.shape == (1, 1, 20, 17)

    def test_conv_channel_mismatch_names_dimension(self):
        spec = ConvSpec(kernel_size=3, padding=1, in_channels=4, out_channels=1)
        x = Tensor(np.zeros((1, 3, 5, 5), np.float32))
        w = Tensor(np.zeros((1, 4, 3, 3), np.float32))
        with pytest.raises(ValueError, match="3 channels"):
            ad.conv2d(x, w, Tensor(np.zeros(1, np.float32)), spec)

    def test_global_avg_pool_values(self):
        const = Tensor(np.full((1, 1, 4, 6), 0.3, np.float32))
        np.testing.assert_allclose(ad.global_avg_pool(const).data, [[0.3]], rtol=1e-6)
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]], np.float32))
        np.testing.assert_allclose(ad.global_avg_pool(x).data, [[2.5]])

    def test_global_avg_pool_gradient_is_inverse_area(self):
        x = Tensor(np.ones((1, 2, 3, 5), np.float32), requires_grad=True)
        ad.mean(ad.global_avg_pool(x)).backward()
        # d mean(GAP) / dx = 1/(N*C) * 1/(H*W)
        np.testing.assert_allclose(x.grad, np.full_like(x.data, 1.0 / (2 * 15)), rtol=1e-6)

    def test_empty_spatial_dims_rejected(self):
        x = Tensor(np.zeros((1, 2, 0, 3), np.float32))
        with pytest.raises(ValueError, match="spatial"):
            ad.global_avg_pool(x)

    def test_sigmoid_relu_pointwise(self):
        assert ad.sigmoid(Tensor(0.0)).item() == pytest.approx(0.5)
        assert ad.relu(Tensor(-1.5)).item() == 0.0
        assert ad.relu(Tensor(2.5)).item() == pytest.approx(2.5)
        assert ad.leaky_relu(Tensor(-1.0), 0.2).item() == pytest.approx(-0.2)

    def test_per_channel_scale_halves_everything(self):
        x = Tensor(np.arange(24, dtype=np.float32).reshape(1, 2, 3, 4))
        s = Tensor(np.full((1, 2), 0.5, np.float32))
        np.testing.assert_allclose(ad.mul(x, s).data, x.data * 0.5)

    def test_incompatible_shapes_rejected(self):
        with pytest.raises(ValueError, match="cannot be combined"):
            ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))

    def test_linear_cases(self):
        x = Tensor(np.array([[0.25, 0.25]], np.float32))
        zero = ad.linear(x, Tensor(np.zeros((1, 2), np.float32)), Tensor(np.zeros(1, np.float32)))
        assert zero.item() == 0.0
        ident = ad.linear(
            Tensor(np.array([[1.0, 2.0]], np.float32)),
            Tensor(np.eye(2, dtype=np.float32)),
            Tensor(np.zeros(2, np.float32)),
        )
        np.testing.assert_allclose(ident.data, [[1.0, 2.0]])
        affine = ad.linear(x, Tensor(np.array([[1.0, 1.0]], np.float32)), Tensor(np.array([0.5], np.float32)))
        assert affine.item() == pytest.approx(1.0)

    def test_linear_dim_mismatch(self):
        with pytest.raises(ValueError, match="feature dimension"):
            ad.linear(Tensor(np.zeros((1, 3))), Tensor(np.zeros((2, 4))), Tensor(np.zeros(2)))

    def test_upsample_nearest(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]], np.float32))
        up = ad.upsample_nearest(x, 2)
        expected = np.array([[[[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]]], np.float32)
        np.testing.assert_array_equal(up.data, expected)

    def test_forward_differences(self):
        x = Tensor(np.array([[0.0, 1.0], [0.0, 1.0]], np.float32))
        np.testing.assert_array_equal(ad.diff_h(x).data, [[1.0], [1.0]])
        np.testing.assert_array_equal(ad.diff_v(x).data, [[0.0, 0.0]])

    def test_log_sigmoid_extremes(self):
        vals = ad.log_sigmoid(Tensor(np.array([50.0, -50.0, 0.0], np.float32))).data
        assert vals[0] == pytest.approx(0.0, abs=1e-6)
        assert vals[1] == pytest.approx(-50.0, abs=1e-4)
        assert vals[2] == pytest.approx(-np.log(2), abs=1e-6)
        assert np.all(np.isfinite(vals))

    def test_float32_throughout(self):
        rng = np.random.default_rng(2)
        x = rand_tensor(rng, (1, 2, 4, 4))
        s = rand_tensor(rng, (1, 2))
        out = ad.sigmoid(ad.mul(x, s))
        assert out.data.dtype == np.float32
        ad.mean(out).backward()
        assert x.grad.dtype == np.float32


class TestBackward:
    def test_mean_of_squares_gradient(self):
        x = Tensor(np.array([1.0, -1.0], np.float32), requires_grad=True)
        ad.square_mean(x).backward()
        np.testing.assert_allclose(x.grad, [1.0, -1.0], rtol=1e-6)

    def test_detached_tensor_gets_no_grad(self):
        x = Tensor(np.array([1.0, 2.0], np.float32), requires_grad=True)
        d = x.detach()
        loss = ad.square_mean(ad.add(d, x))
        loss.backward()
        assert d.grad is None
        assert x.grad is not None

    def test_non_scalar_backward_rejected(self):
        x = Tensor(np.zeros((2, 2), np.float32), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            ad.add(x, x).backward()

    def test_sum_of_uses_accumulates(self):
        rng = np.random.default_rng(3)
        x = rand_tensor(rng, (4, 3))

        def build():
            return ad.add(ad.square_mean(x), ad.mean(ad.mul(x, x)))

        x.zero_grad()
        build().backward()
        numeric = numeric_grad(lambda: build().data, x)
        assert_grads_match(x.grad, numeric)
        # both branches are mean(x^2): total grad must be 4x/n
        np.testing.assert_allclose(x.grad, 4 * x.data / x.size, rtol=1e-5)

    def test_all_reachable_tensors_have_grads(self):
        rng = np.random.default_rng(4)
        a, b = rand_tensor(rng, (3,)), rand_tensor(rng, (3,))
        mid = ad.mul(a, b)
        loss = ad.mean(ad.relu(mid))
        loss.backward()
        for t in (a, b, mid, loss):
            assert t.grad is not None
            assert t.grad.shape == t.data.shape

    def test_determinism_bitwise(self):
        def run():
            rng = np.random.default_rng(12345)
            x = rand_tensor(rng, (2, 3, 6, 6))
            w = rand_tensor(rng, (4, 3, 3, 3))
            b = rand_tensor(rng, (4,))
            spec = ConvSpec(kernel_size=3, padding=1, in_channels=3, out_channels=4)
            out = ad.conv2d(x, w, b, spec)
            loss = ad.square_mean(ad.sigmoid(out))
            loss.backward()
            return loss.data.tobytes(), x.grad.tobytes(), w.grad.tobytes()

        assert run() == run()


def _signed_fill(scale=1.0, low=0.2, high=1.5):
    def fill(rng, t):
        mags = rng.uniform(low, high, size=t.data.shape)
        signs = np.where(rng.uniform(size=t.data.shape) < 0.5, -1.0, 1.0)
        t.data[...] = (scale * mags * signs).astype(np.float32)

    return fill


def op_cases():
    """One randomized FD scenario per differentiable op.

    Each entry returns (leaf tensors, loss closure, fill). Positive-only
    fills keep relu/abs/log inputs away from their kinks and domains edges.
    """
    rng = np.random.default_rng(7)

    def unary(op, signed=False):
        x = rand_tensor(rng, (3, 7))
        return [x], lambda: ad.mean(op(x)), (_signed_fill() if signed else None)

    def binary(op):
        a, b = rand_tensor(rng, (3, 4)), rand_tensor(rng, (3, 4))
        return [a, b], lambda: ad.mean(op(a, b)), _signed_fill()

    cases = {}
    cases["add"] = binary(ad.add)
    cases["sub"] = binary(ad.sub)
    cases["mul"] = binary(ad.mul)
    cases["scale"] = unary(lambda t: ad.scale(t, 0.7), signed=True)
    cases["relu"] = unary(ad.relu)
    cases["leaky_relu"] = unary(lambda t: ad.leaky_relu(t, 0.2))
    cases["sigmoid"] = unary(ad.sigmoid, signed=True)
    cases["log"] = unary(ad.log)
    cases["log_sigmoid"] = unary(ad.log_sigmoid, signed=True)
    cases["mean"] = unary(lambda t: t, signed=True)

    x = rand_tensor(rng, (4, 5))
    cases["abs_mean"] = ([x], lambda: ad.abs_mean(x), _signed_fill())
    y = rand_tensor(rng, (4, 5))
    cases["square_mean"] = ([y], lambda: ad.square_mean(y), _signed_fill())

    spec = ConvSpec(kernel_size=3, dilation=2, stride=1, padding=2, in_channels=2, out_channels=3)
    cx, cw, cb = rand_tensor(rng, (1, 2, 5, 5)), rand_tensor(rng, (3, 2, 3, 3)), rand_tensor(rng, (3,))
    cases["conv2d"] = ([cx, cw, cb], lambda: ad.mean(ad.conv2d(cx, cw, cb, spec)), _signed_fill())

    sspec = ConvSpec(kernel_size=3, dilation=1, stride=2, padding=1, in_channels=1, out_channels=2)
    sx, sw, sb = rand_tensor(rng, (2, 1, 6, 6)), rand_tensor(rng, (2, 1, 3, 3)), rand_tensor(rng, (2,))
    cases["conv2d_strided"] = ([sx, sw, sb], lambda: ad.mean(ad.conv2d(sx, sw, sb, sspec)), _signed_fill())

    lx, lw, lb = rand_tensor(rng, (3, 4)), rand_tensor(rng, (2, 4)), rand_tensor(rng, (2,))
    cases["linear"] = ([lx, lw, lb], lambda: ad.mean(ad.linear(lx, lw, lb)), _signed_fill())

    gx = rand_tensor(rng, (2, 3, 4, 4))
    cases["global_avg_pool"] = ([gx], lambda: ad.mean(ad.global_avg_pool(gx)), _signed_fill())

    mx, ms = rand_tensor(rng, (2, 3, 4, 4)), rand_tensor(rng, (2, 3))
    cases["channel_scale"] = ([mx, ms], lambda: ad.square_mean(ad.mul(mx, ms)), _signed_fill())

    ux = rand_tensor(rng, (1, 2, 3, 3))
    cases["upsample_nearest"] = ([ux], lambda: ad.square_mean(ad.upsample_nearest(ux, 2)), _signed_fill())

    dx = rand_tensor(rng, (1, 1, 4, 5))
    cases["diff_h"] = ([dx], lambda: ad.square_mean(ad.diff_h(dx)), _signed_fill())
    dy = rand_tensor(rng, (1, 1, 4, 5))
    cases["diff_v"] = ([dy], lambda: ad.square_mean(ad.diff_v(dy)), _signed_fill())
    return cases


@pytest.mark.parametrize("name", sorted(op_cases()))
def test_gradients_match_finite_differences(name):
    tensors, loss_fn, fill = op_cases()[name]
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    check_gradients(loss_fn, tensors, cases=20, rng=rng, fill=fill)


def test_conv_forward_vs_scipy_oracle():
    # independent forward oracle: scipy correlate2d must agree with conv2d
    from scipy.signal import correlate2d

    rng = np.random.default_rng(9)
    x = rng.uniform(-1, 1, size=(1, 2, 7, 6)).astype(np.float32)
    w = rng.uniform(-1, 1, size=(3, 2, 3, 3)).astype(np.float32)
    b = rng.uniform(-1, 1, size=3).astype(np.float32)
    spec = ConvSpec(kernel_size=3, padding=1, in_channels=2, out_channels=3)
    out = ad.conv2d(Tensor(x), Tensor(w), Tensor(b), spec)
    expected = np.zeros_like(out.data)
    for o in range(3):
        acc = np.full((7, 6), b[o], dtype=np.float64)
        for i in range(2):
            acc += correlate2d(x[0, i].astype(np.float64), w[o, i].astype(np.float64), mode="same")
        expected[0, o] = acc
    np.testing.assert_allclose(out.data, expected, rtol=1e-4, atol=1e-5)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tabsurv import nn


def _rel(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8))


class TestLinear:
    def test_small_case(self):
        y, _ = nn.linear_forward(np.array([[1.0, 0.0]]), np.array([[2.0, 0.0], [0.0, 3.0]]), np.zeros(2))
        np.testing.assert_array_equal(y, [[2.0, 0.0]])

    def test_identity(self, rng):
        x = rng.standard_normal((5, 3))
        y, _ = nn.linear_forward(x, np.eye(3), np.zeros(3))
        np.testing.assert_array_equal(y, x)

    def test_matches_triple_loop(self, rng):
        x, W, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2)), rng.standard_normal(2)
        y, _ = nn.linear_forward(x, W, b)
        ref = np.zeros((3, 2))
        for i in range(3):
            for j in range(2):
                ref[i, j] = b[j] + sum(x[i, k] * W[k, j] for k in range(4))
        np.testing.assert_allclose(y, ref, rtol=0, atol=1e-12)

    def test_bias_grad_of_ones(self):
        _, cache = nn.linear_forward(np.ones((2, 2)), np.ones((2, 2)), np.zeros(2))
        _, _, gb = nn.linear_backward(np.ones((2, 2)), cache)
        np.testing.assert_array_equal(gb, [2.0, 2.0])

    def test_zero_grad_out(self, rng):
        _, cache = nn.linear_forward(rng.standard_normal((2, 3)), rng.standard_normal((3, 2)), np.zeros(2))
        for g in nn.linear_backward(np.zeros((2, 2)), cache):
            assert not np.any(g)

    def test_finite_differences(self, rng):
        store = nn.ParameterStore(0)
        store.add("W", rng.standard_normal((3, 2)))
        store.add("b", rng.standard_normal(2))
        x = rng.standard_normal((2, 3))
        c = rng.standard_normal((2, 2))

        def loss():
            y, cache = nn.linear_forward(x, store["W"], store["b"])
            _, gW, gb = nn.linear_backward(c, cache)
            store.accumulate("W", gW)
            store.accumulate("b", gb)
            return float((y * c).sum())

        assert nn.gradient_check(loss, store, tol=1e-5).passed

    def test_ensemble_weights_broadcast(self, rng):
        x = rng.standard_normal((4, 3))
        W = rng.standard_normal((2, 3, 5))
        y, _ = nn.linear_forward(x, W, np.zeros((2, 5)))
        assert y.shape == (2, 4, 5)
        np.testing.assert_allclose(y[1], x @ W[1], atol=1e-12)


class TestActivations:
    def test_relu(self):
        np.testing.assert_array_equal(nn.activation("relu", np.array([-1.0, 2.0])), [0.0, 2.0])

    def test_relu_subgradient_at_zero(self):
        _, cache = nn.activation_forward("relu", np.array([0.0]))
        assert nn.activation_backward(np.array([1.0]), cache)[0] == 0.0

    def test_silu_zero(self):
        assert nn.activation("silu", np.array([0.0]))[0] == 0.0

    def test_selu_values(self):
        y = nn.activation("selu", np.array([1.0, -1.0]))
        assert y[0] == pytest.approx(1.05070098, abs=1e-8)
        assert y[1] == pytest.approx(-1.11133, abs=1e-5)

    @pytest.mark.parametrize("kind", ["relu", "silu", "selu"])
    def test_backward_matches_differences(self, kind, rng):
        x = rng.standard_normal(50)
        x = x[np.abs(x) > 1e-3]
        _, cache = nn.activation_forward(kind, x)
        g = nn.activation_backward(np.ones_like(x), cache)
        h = 1e-6
        num = (nn.activation(kind, x + h) - nn.activation(kind, x - h)) / (2 * h)
        assert _rel(g, num) < 1e-4


class TestLayerNormDropout:
    def test_layer_norm_values(self):
        y, _ = nn.layer_norm_forward(np.array([[1.0, 2.0, 3.0]]), np.ones(3), np.zeros(3))
        np.testing.assert_allclose(y, [[-1.2247, 0.0, 1.2247]], atol=1e-4)

    def test_layer_norm_gradients(self, rng):
        store = nn.ParameterStore(0)
        store.add("g", rng.uniform(0.5, 1.5, 4))
        store.add("s", rng.standard_normal(4))
        x = rng.standard_normal((3, 4))
        c = rng.standard_normal((3, 4))

        def loss():
            y, cache = nn.layer_norm_forward(x, store["g"], store["s"])
            _, gg, gs = nn.layer_norm_backward(c, cache)
            store.accumulate("g", gg)
            store.accumulate("s", gs)
            return float((y * c).sum())

        assert nn.gradient_check(loss, store).passed

    def test_layer_norm_input_gradient(self, rng):
        x = rng.standard_normal((2, 5))
        c = rng.standard_normal((2, 5))
        gain, shift = rng.uniform(0.5, 1.5, 5), rng.standard_normal(5)
        _, cache = nn.layer_norm_forward(x, gain, shift)
        gx, _, _ = nn.layer_norm_backward(c, cache)
        h = 1e-6
        num = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            xp, xm = x.copy(), x.copy()
            xp[idx] += h
            xm[idx] -= h
            num[idx] = ((nn.layer_norm_forward(xp, gain, shift)[0] - nn.layer_norm_forward(xm, gain, shift)[0]) * c
                        ).sum() / (2 * h)
        assert _rel(gx, num) < 1e-4

    @pytest.mark.parametrize("training", [False, True])
    def test_dropout_zero_rate_is_identity(self, training, rng):
        x = rng.standard_normal((3, 4))
        y, mask = nn.dropout_forward(x, 0.0, training, rng)
        np.testing.assert_array_equal(y, x)
        np.testing.assert_array_equal(nn.dropout_backward(np.ones_like(x), mask), np.ones_like(x))

    def test_dropout_preserves_mean(self):
        x = np.full(100_000, 2.0)
        y, _ = nn.dropout_forward(x, 0.5, True, np.random.default_rng(0))
        assert abs(y.mean() - 2.0) / 2.0 < 0.05

    def test_dropout_rate_one_rejected(self, rng):
        with pytest.raises(ValueError):
            nn.dropout_forward(np.ones(3), 1.0, True, rng)


class TestSoftmaxSoftplus:
    def test_equal_logits(self):
        np.testing.assert_allclose(nn.softmax(np.zeros(4)), [0.25] * 4, atol=1e-15)

    def test_log3(self):
        np.testing.assert_allclose(nn.softmax(np.array([0.0, np.log(3.0)])), [0.25, 0.75], atol=1e-15)

    def test_no_overflow(self):
        p = nn.softmax(np.array([1000.0, 0.0]))
        assert np.all(np.isfinite(p)) and p[0] == 1.0 and p[1] < 1e-300

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (3, 6), elements=st.floats(-50, 50)), st.floats(-100, 100))
    def test_rows_sum_to_one_and_shift_invariant(self, logits, c):
        p = nn.softmax(logits)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(nn.softmax(logits + c), p, atol=1e-12)

    def test_softmax_backward(self, rng):
        z = rng.standard_normal(5)
        c = rng.standard_normal(5)
        g = nn.softmax_backward(c, nn.softmax(z))
        h = 1e-6
        num = np.array([((nn.softmax(z + h * e) - nn.softmax(z - h * e)) @ c) / (2 * h) for e in np.eye(5)])
        assert _rel(g, num) < 1e-5

    def test_softplus_values(self):
        assert nn.softplus(np.array(0.0)) == pytest.approx(np.log(2.0), abs=1e-15)
        assert abs(nn.softplus(np.array(50.0)) - 50.0) < 1e-12

    def test_softplus_derivative_at_zero(self):
        g = nn.softplus_backward(np.array(1.0), np.array(0.0))
        h = 1e-5
        num = (nn.softplus(np.array(h)) - nn.softplus(np.array(-h))) / (2 * h)
        assert g == pytest.approx(0.5, abs=1e-15)
        assert num == pytest.approx(0.5, abs=1e-9)

    def test_inverse_softplus(self):
        for y in (1e-3, 1.0, 7.5):
            assert nn.softplus(np.array(nn.inverse_softplus(y))) == pytest.approx(y, rel=1e-12)


class TestAdam:
    def test_first_step_size(self):
        store = nn.ParameterStore(0)
        store.add("w", np.array([1.0]))
        store.grads["w"][:] = 1.0
        nn.adam_step(store, nn.AdamState(lr=0.1))
        assert store["w"][0] == pytest.approx(0.9, abs=1e-6)

    def test_zero_gradient_is_noop(self):
        store = nn.ParameterStore(0)
        store.add("w", np.array([1.0, -2.0]))
        nn.adam_step(store, nn.AdamState(lr=0.1))
        np.testing.assert_array_equal(store["w"], [1.0, -2.0])

    def test_deterministic(self):
        def run():
            store = nn.ParameterStore(3)
            store.add("w", store.rng.standard_normal(4))
            state = nn.AdamState(lr=0.01)
            for _ in range(5):
                store.accumulate("w", 2 * store["w"])
                nn.adam_step(store, state)
            return store["w"].copy()

        np.testing.assert_array_equal(run(), run())

    def test_non_finite_gradient_named(self):
        store = nn.ParameterStore(0)
        store.add("layer", np.zeros(2))
        store.grads["layer"][0] = np.nan
        with pytest.raises(FloatingPointError, match="layer"):
            nn.adam_step(store, nn.AdamState())


class TestGradientCheck:
    def test_quadratic(self, rng):
        store = nn.ParameterStore(0)
        store.add("theta", rng.standard_normal(6))

        def loss():
            store.accumulate("theta", store["theta"].copy())
            return 0.5 * float(store["theta"] @ store["theta"])

        assert nn.gradient_check(loss, store, h=1e-5).max_rel_error < 1e-7

    def test_corrupted_backward_fails(self, rng):
        store = nn.ParameterStore(0)
        store.add("theta", rng.standard_normal(6))

        def loss():
            store.accumulate("theta", 1.1 * store["theta"])
            return 0.5 * float(store["theta"] @ store["theta"])

        assert not nn.gradient_check(loss, store).passed

import math

import numpy as np
import pytest

from waveseg.autodiff import (
    SGD,
    Tape,
    add_node,
    affine_node,
    backward,
    concat_node,
    conv2d_node,
    conv_transpose2x2_node,
    dot_node,
    dwt_node,
    half_sq_norm_node,
    idwt_node,
    maxpool2_node,
    maxunpool2_node,
    numerical_gradient,
    relative_error,
    relu_node,
    softmax_ce_loss_node,
    sum_node,
)
from waveseg.errors import ArgumentError, ShapeError
from waveseg.transform import dwt

GRAD_TOL = 1e-5


def _sum_of_halves(nodes):
    total = None
    for node in nodes:
        term = half_sq_norm_node(node)
        total = term if total is None else add_node(total, term)
    return total


class TestBackward:
    def test_dot_gradient_is_the_constant(self, rng):
        tape = Tape()
        x = tape.leaf(rng.normal(size=(3, 4)))
        c = rng.normal(size=(3, 4))
        loss = dot_node(x, c)
        backward(tape, loss)
        assert np.array_equal(x.grad, c)

    def test_fan_out_accumulates(self, rng):
        tape = Tape()
        x = tape.leaf(rng.normal(size=5))
        loss = add_node(sum_node(x), sum_node(x))
        backward(tape, loss)
        np.testing.assert_array_equal(x.grad, np.full(5, 2.0))

    def test_unreachable_nodes_get_zero(self, rng):
        tape = Tape()
        x = tape.leaf(rng.normal(size=4))
        y = tape.leaf(rng.normal(size=4))
        relu_node(y)
        loss = sum_node(x)
        backward(tape, loss)
        assert not np.any(y.grad)

    def test_repeated_backward_is_deterministic(self, rng):
        tape = Tape()
        x = tape.leaf(rng.normal(size=(1, 1, 8, 8)))
        s = dwt_node(x, "db2", 2, "symmetric")
        loss = _sum_of_halves(s.components().values())
        backward(tape, loss)
        first = x.grad.copy()
        backward(tape, loss)
        assert np.array_equal(first, x.grad)

    def test_loss_must_be_scalar(self, rng):
        tape = Tape()
        x = tape.leaf(rng.normal(size=3))
        with pytest.raises(ArgumentError):
            backward(tape, relu_node(x))

    def test_loss_must_be_on_tape(self, rng):
        other = Tape()
        loss = sum_node(other.leaf(rng.normal(size=3)))
        with pytest.raises(ArgumentError):
            backward(Tape(), loss)

    def test_mixing_tapes_is_rejected(self):
        a = Tape().leaf([1.0, 2.0])
        b = Tape().leaf([3.0, 4.0])
        with pytest.raises(ArgumentError):
            add_node(a, b)


class TestWaveletNodes:
    @pytest.mark.parametrize("mode", ["periodic", "symmetric", "zero"])
    def test_forward_matches_transform(self, rng, mode):
        x = rng.normal(size=(2, 3, 8, 8))
        s = dwt_node(Tape().leaf(x), "ch2.2", 2, mode)
        reference = dwt(x, "ch2.2", 2, mode)
        for tag, node in s.components().items():
            assert np.array_equal(node.value, np.asarray(reference[tag]))

    @pytest.mark.parametrize("name,mode", [("db2", "symmetric"), ("haar", "periodic"), ("db3", "zero"), ("ch3.3", "symmetric")])
    def test_dwt_energy_gradient(self, rng, name, mode):
        x0 = rng.normal(size=(1, 8, 8))

        def f(v):
            tape = Tape()
            s = dwt_node(tape.leaf(v), name, 2, mode)
            return float(_sum_of_halves(s.components().values()).value)

        tape = Tape()
        x = tape.leaf(x0)
        loss = _sum_of_halves(dwt_node(x, name, 2, mode).components().values())
        backward(tape, loss)
        assert relative_error(x.grad, numerical_gradient(f, x0)) <= GRAD_TOL

    @pytest.mark.parametrize("mode", ["periodic", "symmetric", "zero"])
    def test_idwt_gradient(self, rng, mode):
        x0 = rng.normal(size=(1, 8, 8))
        c = rng.normal(size=(1, 8, 8))

        def f(v):
            tape = Tape()
            return float(dot_node(idwt_node(dwt_node(tape.leaf(v), "db2", 2, mode)), c).value)

        tape = Tape()
        x = tape.leaf(x0)
        loss = dot_node(idwt_node(dwt_node(x, "db2", 2, mode)), c)
        backward(tape, loss)
        assert relative_error(x.grad, numerical_gradient(f, x0)) <= GRAD_TOL

    def test_gradient_of_dot_through_dwt_is_adjoint(self, rng):
        x0 = rng.normal(size=(6, 10))
        c = {t: rng.normal(size=(3, 5)) for t in ("ll", "lh", "hl", "hh")}
        tape = Tape()
        x = tape.leaf(x0)
        comps = dwt_node(x, "db2", 2, "symmetric").components()
        total = None
        for tag, node in comps.items():
            term = dot_node(node, c[tag])
            total = term if total is None else add_node(total, term)
        backward(tape, total)
        lhs = sum(float(np.sum(np.asarray(dwt(x0, "db2", 2, "symmetric")[t]) * c[t])) for t in c)
        assert lhs == pytest.approx(float(np.sum(x0 * x.grad)), rel=1e-10)

    def test_idwt_wavelet_mismatch(self, rng):
        s = dwt_node(Tape().leaf(rng.normal(size=(4, 4))), "haar", 2, "periodic")
        with pytest.raises(ArgumentError):
            idwt_node(s, "db2")

    def test_dropping_details_reconstructs_lowpass(self, rng):
        tape = Tape()
        s = dwt_node(tape.leaf(rng.normal(size=(1, 1, 8, 8))), "haar", 2, "periodic")
        zeros = {t: tape.leaf(np.zeros_like(n.value)) for t, n in s.highs.items()}
        smooth = idwt_node(s.with_highs(zeros))
        assert smooth.shape == (1, 1, 8, 8)
        # Haar low-pass only reconstruction is constant on each 2x2 block
        blocks = smooth.value[0, 0].reshape(4, 2, 4, 2)
        np.testing.assert_allclose(blocks, blocks[:, :1, :, :1] * np.ones((1, 2, 1, 2)), atol=1e-12)


class TestLayers:
    def test_conv_gradients(self, rng):
        x0 = rng.normal(size=(2, 4, 8, 8))
        k0 = rng.normal(size=(3, 4, 3, 3))
        b0 = rng.normal(size=3)
        c = rng.normal(size=(2, 3, 8, 8))

        def loss_of(x, k, b):
            tape = Tape()
            return float(dot_node(conv2d_node(tape.leaf(x), tape.leaf(k), tape.leaf(b)), c).value)

        tape = Tape()
        x, k, b = tape.leaf(x0), tape.leaf(k0), tape.leaf(b0)
        backward(tape, dot_node(conv2d_node(x, k, b), c))
        assert relative_error(x.grad, numerical_gradient(lambda v: loss_of(v, k0, b0), x0)) <= GRAD_TOL
        assert relative_error(k.grad, numerical_gradient(lambda v: loss_of(x0, v, b0), k0)) <= GRAD_TOL
        assert relative_error(b.grad, numerical_gradient(lambda v: loss_of(x0, k0, v), b0)) <= GRAD_TOL

    def test_identity_kernel(self, rng):
        x0 = rng.normal(size=(1, 3, 6, 6))
        tape = Tape()
        kernel = np.zeros((3, 3, 3, 3))
        kernel[np.arange(3), np.arange(3), 1, 1] = 1.0
        out = conv2d_node(tape.leaf(x0), tape.leaf(kernel), tape.leaf(np.zeros(3)))
        assert np.array_equal(out.value, x0)

    def test_conv_adjoint_identity(self, rng):
        x0 = rng.normal(size=(1, 2, 7, 7))
        y = rng.normal(size=(1, 3, 7, 7))
        tape = Tape()
        x = tape.leaf(x0)
        out = conv2d_node(x, tape.leaf(rng.normal(size=(3, 2, 3, 3))), tape.leaf(np.zeros(3)))
        backward(tape, dot_node(out, y))
        assert float(np.sum(out.value * y)) == pytest.approx(float(np.sum(x0 * x.grad)), rel=1e-10)

    def test_conv_shape_errors(self):
        tape = Tape()
        x = tape.leaf(np.ones((1, 2, 4, 4)))
        with pytest.raises(ShapeError):
            conv2d_node(x, tape.leaf(np.ones((1, 3, 3, 3))), tape.leaf(np.zeros(1)))
        with pytest.raises(ShapeError):
            conv2d_node(x, tape.leaf(np.ones((1, 2, 2, 2))), tape.leaf(np.zeros(1)))

    def test_conv_transpose_gradients(self, rng):
        x0 = rng.normal(size=(2, 3, 4, 4))
        k0 = rng.normal(size=(3, 2, 2, 2))
        b0 = rng.normal(size=2)
        c = rng.normal(size=(2, 2, 8, 8))

        def loss_of(x, k, b):
            tape = Tape()
            return float(dot_node(conv_transpose2x2_node(tape.leaf(x), tape.leaf(k), tape.leaf(b)), c).value)

        tape = Tape()
        x, k, b = tape.leaf(x0), tape.leaf(k0), tape.leaf(b0)
        out = conv_transpose2x2_node(x, k, b)
        assert out.shape == (2, 2, 8, 8)
        assert out.value[1, 0, 3, 4] == pytest.approx(float(x0[1, :, 1, 2] @ k0[:, 0, 1, 0]) + b0[0], abs=1e-12)
        backward(tape, dot_node(out, c))
        assert relative_error(x.grad, numerical_gradient(lambda v: loss_of(v, k0, b0), x0)) <= GRAD_TOL
        assert relative_error(k.grad, numerical_gradient(lambda v: loss_of(x0, v, b0), k0)) <= GRAD_TOL
        assert relative_error(b.grad, numerical_gradient(lambda v: loss_of(x0, k0, v), b0)) <= GRAD_TOL

    def test_affine_and_relu_gradients(self, rng):
        x0 = rng.normal(size=(2, 3, 4, 4))
        s0 = rng.normal(size=3)
        t0 = rng.normal(size=3)
        c = rng.normal(size=(2, 3, 4, 4))

        def loss_of(x, s, t):
            tape = Tape()
            out = relu_node(affine_node(tape.leaf(x), tape.leaf(s), tape.leaf(t)))
            return float(dot_node(out, c).value)

        tape = Tape()
        x, s, t = tape.leaf(x0), tape.leaf(s0), tape.leaf(t0)
        backward(tape, dot_node(relu_node(affine_node(x, s, t)), c))
        assert relative_error(x.grad, numerical_gradient(lambda v: loss_of(v, s0, t0), x0)) <= GRAD_TOL
        assert relative_error(s.grad, numerical_gradient(lambda v: loss_of(x0, v, t0), s0)) <= GRAD_TOL
        assert relative_error(t.grad, numerical_gradient(lambda v: loss_of(x0, s0, v), t0)) <= GRAD_TOL

    def test_concat_splits_gradient(self, rng):
        tape = Tape()
        a = tape.leaf(rng.normal(size=(1, 2, 3, 3)))
        b = tape.leaf(rng.normal(size=(1, 1, 3, 3)))
        c = rng.normal(size=(1, 3, 3, 3))
        out = concat_node([a, b])
        assert out.shape == (1, 3, 3, 3)
        backward(tape, dot_node(out, c))
        assert np.array_equal(a.grad, c[:, :2])
        assert np.array_equal(b.grad, c[:, 2:])


class TestPooling:
    def test_unpool_places_maxima(self, rng):
        x0 = rng.permutation(16).astype(float).reshape(1, 1, 4, 4)
        tape = Tape()
        pooled, indices = maxpool2_node(tape.leaf(x0))
        assert pooled.shape == (1, 1, 2, 2)
        restored = maxunpool2_node(pooled, indices).value
        for r in range(2):
            for c in range(2):
                window = x0[0, 0, 2 * r:2 * r + 2, 2 * c:2 * c + 2]
                placed = restored[0, 0, 2 * r:2 * r + 2, 2 * c:2 * c + 2]
                assert pooled.value[0, 0, r, c] == window.max()
                assert np.count_nonzero(placed) == 1
                assert placed.max() == window.max()
                assert placed[np.unravel_index(np.argmax(window), (2, 2))] == window.max()

    def test_unpool_is_transpose_of_pool(self, rng):
        x0 = rng.normal(size=(2, 3, 6, 8))
        y = rng.normal(size=(2, 3, 3, 4))
        tape = Tape()
        pooled, indices = maxpool2_node(tape.leaf(x0))
        up = maxunpool2_node(tape.leaf(y), indices)
        assert float(np.sum(pooled.value * y)) == pytest.approx(float(np.sum(x0 * up.value)), rel=1e-12)

    def test_pool_unpool_gradient(self, rng):
        x0 = rng.normal(size=(1, 2, 4, 4))
        labels = rng.integers(0, 2, size=(1, 4, 4))

        def f(v):
            tape = Tape()
            pooled, indices = maxpool2_node(tape.leaf(v))
            return float(softmax_ce_loss_node(maxunpool2_node(pooled, indices), labels).value)

        tape = Tape()
        x = tape.leaf(x0)
        pooled, indices = maxpool2_node(x)
        backward(tape, softmax_ce_loss_node(maxunpool2_node(pooled, indices), labels))
        assert relative_error(x.grad, numerical_gradient(f, x0)) <= GRAD_TOL

    def test_odd_extent_rejected(self):
        with pytest.raises(ShapeError):
            maxpool2_node(Tape().leaf(np.ones((1, 1, 3, 4))))


class TestLoss:
    def test_uniform_logits(self):
        tape = Tape()
        loss = softmax_ce_loss_node(tape.leaf(np.zeros((2, 3, 4, 4))), np.zeros((2, 4, 4), dtype=int))
        assert float(loss.value) == pytest.approx(math.log(3), abs=1e-12)

    def test_ignored_pixels_do_not_count(self, rng):
        logits = rng.normal(size=(1, 3, 2, 2))
        labels = np.array([[[0, 255], [2, 255]]])
        tape = Tape()
        x = tape.leaf(logits)
        loss = softmax_ce_loss_node(x, labels)
        backward(tape, loss)
        assert not np.any(x.grad[0, :, 0, 1])
        assert not np.any(x.grad[0, :, 1, 1])
        log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
        expected = -(log_probs[0, 0, 0, 0] + log_probs[0, 2, 1, 0]) / 2
        assert float(loss.value) == pytest.approx(expected, abs=1e-12)

    def test_gradient(self, rng):
        logits = rng.normal(size=(2, 3, 3, 3))
        labels = rng.integers(0, 3, size=(2, 3, 3))
        tape = Tape()
        x = tape.leaf(logits)
        backward(tape, softmax_ce_loss_node(x, labels))
        numeric = numerical_gradient(lambda v: float(softmax_ce_loss_node(Tape().leaf(v), labels).value), logits)
        assert relative_error(x.grad, numeric) <= GRAD_TOL

    def test_bad_labels(self):
        tape = Tape()
        with pytest.raises(ArgumentError):
            softmax_ce_loss_node(tape.leaf(np.zeros((1, 3, 2, 2))), np.full((1, 2, 2), 3))
        with pytest.raises(ShapeError):
            softmax_ce_loss_node(tape.leaf(np.zeros((1, 3, 2, 2))), np.zeros((1, 2, 3), dtype=int))


class TestSGD:
    def test_zero_learning_rate_keeps_params(self, rng):
        p = {"w": rng.normal(size=4)}
        before = p["w"].copy()
        SGD(p, lr=0.0).step({"w": rng.normal(size=4)})
        assert np.array_equal(p["w"], before)

    def test_momentum_update(self):
        p = {"w": np.array([1.0, -1.0])}
        opt = SGD(p, lr=0.1, momentum=0.5)
        g = {"w": np.array([1.0, 2.0])}
        opt.step(g)
        np.testing.assert_allclose(p["w"], [0.9, -1.2])
        opt.step(g)
        np.testing.assert_allclose(p["w"], [0.9 - 0.15, -1.2 - 0.3])

    def test_invalid_settings(self):
        with pytest.raises(ArgumentError):
            SGD({}, lr=-1.0)
        with pytest.raises(ArgumentError):
            SGD({}, lr=0.1, momentum=1.0)

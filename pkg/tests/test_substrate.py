import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdr.substrate import (
    DeterminismError,
    InvariantError,
    NumericError,
    ParamStore,
    ShapeError,
    adam_step,
    affine,
    attention,
    finite_diff_gradcheck,
    layer_norm,
    log,
    mean,
    neighborhood3x3,
    pool_sites,
    relu,
    softmax,
    temporal_conv,
    tensor,
    tsum,
)
from sdr.substrate import _kernels_py, kernels


def conv_loop(x, k, b, stride):
    T, di = x.shape
    kt, _, do = k.shape
    pad = (kt - 1) // 2
    t_out = (T + 2 * pad - kt) // stride + 1
    out = np.zeros((t_out, do))
    for t in range(t_out):
        for o in range(do):
            acc = b[o]
            for kk in range(kt):
                src = stride * t + kk - pad
                if 0 <= src < T:
                    for i in range(di):
                        acc += x[src, i] * k[kk, i, o]
            out[t, o] = acc
    return out


class TestTemporalConv:
    def test_identity_kernel(self, f64):
        x = np.random.default_rng(0).standard_normal((6, 3))
        k = np.eye(3)[None]
        out = temporal_conv(tensor(x), tensor(k), tensor(np.zeros(3)))
        assert np.array_equal(out.data, x)

    def test_zero_input_gives_bias(self, f64):
        b = np.array([0.5, -1.0, 2.0, 3.0])
        k = np.random.default_rng(0).standard_normal((3, 2, 4))
        out = temporal_conv(tensor(np.zeros((7, 2))), tensor(k), tensor(b))
        assert np.array_equal(out.data, np.tile(b, (7, 1)))

    @pytest.mark.parametrize("stride", [1, 2])
    def test_matches_loop_oracle(self, f64, stride):
        # integer-valued operands keep every partial sum exact
        rng = np.random.default_rng(stride)
        x = rng.integers(-4, 5, (8, 3)).astype(float)
        k = rng.integers(-3, 4, (3, 3, 4)).astype(float)
        b = rng.integers(-2, 3, 4).astype(float)
        out = temporal_conv(tensor(x), tensor(k), tensor(b), stride=stride)
        assert np.array_equal(out.data, conv_loop(x, k, b, stride))

    def test_random_float_matches_loop(self, f64, rng):
        x = rng.standard_normal((8, 3))
        k = rng.standard_normal((3, 3, 4))
        b = rng.standard_normal(4)
        out = temporal_conv(tensor(x), tensor(k), tensor(b))
        np.testing.assert_allclose(out.data, conv_loop(x, k, b, 1), rtol=0, atol=1e-13)

    def test_linearity(self, f64, rng):
        x, y = rng.standard_normal((2, 9, 3))
        k = tensor(rng.standard_normal((3, 3, 2)))
        zero = tensor(np.zeros(2))
        a, c = 1.7, -0.3
        lhs = temporal_conv(tensor(a * x + c * y), k, zero).data
        rhs = a * temporal_conv(tensor(x), k, zero).data + c * temporal_conv(tensor(y), k, zero).data
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)

    def test_even_kernel_stride_one_rejected(self, f64):
        with pytest.raises(ShapeError):
            temporal_conv(tensor(np.zeros((6, 2))), tensor(np.zeros((2, 2, 2))), tensor(np.zeros(2)))

    def test_dim_mismatch_rejected(self, f64):
        with pytest.raises(ShapeError):
            temporal_conv(tensor(np.zeros((6, 3))), tensor(np.zeros((3, 2, 2))), tensor(np.zeros(2)))

    def test_short_sequence_rejected(self, f64):
        with pytest.raises(ShapeError):
            temporal_conv(tensor(np.zeros((2, 2))), tensor(np.zeros((3, 2, 2))), tensor(np.zeros(2)))


class TestSoftmax:
    def test_symmetric(self):
        np.testing.assert_allclose(softmax(tensor([0.0, 0.0])).data, [0.5, 0.5])

    @pytest.mark.parametrize("x", [-50.0, 0.0, 3.3, 80.0])
    def test_uniform(self, x):
        np.testing.assert_allclose(softmax(tensor([x, x, x])).data, [1 / 3] * 3, atol=1e-7)

    def test_hand_evaluation(self, f64):
        np.testing.assert_allclose(softmax(tensor([math.log(1), math.log(3)])).data, [0.25, 0.75], atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=8), st.floats(-100, 100))
    def test_sums_to_one_and_shift_invariant(self, logits, c):
        p = softmax(tensor(logits)).data
        q = softmax(tensor(np.array(logits) + c)).data
        assert abs(p.sum() - 1.0) <= 1e-6
        assert np.all(p >= 0)
        np.testing.assert_allclose(p, q, atol=1e-6)

    def test_non_finite_is_error(self):
        with pytest.raises(NumericError):
            softmax(tensor([np.inf, 0.0]))


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        ps = ParamStore()
        w = ps.add("w", [1.0, -2.0])
        ps.zero_grad()
        adam_step(ps, lr=0.1, step_index=1)
        assert np.array_equal(w.data, np.array([1.0, -2.0], dtype=w.data.dtype))

    @pytest.mark.parametrize("g", [3.0, -0.2])
    def test_descent_direction(self, g):
        ps = ParamStore()
        w = ps.add("w", [0.0])
        w.grad = np.array([g], dtype=w.data.dtype)
        adam_step(ps, lr=1e-3, step_index=1)
        assert np.sign(w.data[0]) == -np.sign(g)

    def test_two_step_trace(self, f64):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        theta, m, v = 0.5, 0.0, 0.0
        for t in (1, 2):
            m = b1 * m + (1 - b1) * 1.0
            v = b2 * v + (1 - b2) * 1.0
            theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        ps = ParamStore()
        w = ps.add("w", [0.5])
        for t in (1, 2):
            w.grad = np.array([1.0])
            adam_step(ps, lr=lr, beta1=b1, beta2=b2, eps=eps, step_index=t)
        assert abs(w.data[0] - theta) <= 1e-12
        assert np.all(w.grad == 0)

    def test_missing_gradient(self):
        ps = ParamStore()
        ps.add("w", [1.0])
        with pytest.raises(InvariantError):
            adam_step(ps, lr=0.1, step_index=1)

    def test_deterministic(self, rng):
        init = rng.standard_normal((3, 4))
        grads = rng.standard_normal((3, 3, 4))
        results = []
        for _ in range(2):
            ps = ParamStore()
            w = ps.add("w", init)
            for t, g in enumerate(grads, 1):
                w.grad = g.astype(w.data.dtype)
                adam_step(ps, lr=0.01, step_index=t)
            results.append(w.data.tobytes())
        assert results[0] == results[1]

    def test_duplicate_name(self):
        ps = ParamStore()
        ps.add("a", [1.0])
        with pytest.raises(InvariantError):
            ps.add("a", [2.0])


class TestGradcheck:
    def test_quadratic(self, f64, rng):
        ps = ParamStore(rng_seed=3)
        ps.add("theta", rng.standard_normal(40) * 0.3)
        ps.add("small", rng.standard_normal(4))
        rep = finite_diff_gradcheck(lambda p: tsum(p["theta"] * p["theta"]) + tsum(p["small"] * p["small"]), ps)
        assert rep.passed and rep.max_rel_error < 1e-9
        assert rep.checked == 32 + 4

    def test_requires_float64(self):
        ps = ParamStore()
        ps.add("a", [1.0])
        with pytest.raises(RuntimeError):
            finite_diff_gradcheck(lambda p: tsum(p["a"]), ps)

    def test_nondeterministic_loss(self, f64):
        ps = ParamStore()
        ps.add("a", [1.0])
        counter = iter(range(100))
        with pytest.raises(DeterminismError):
            finite_diff_gradcheck(lambda p: tsum(p["a"]) * float(next(counter)), ps)

    def test_corrupted_gradient_named(self, f64, rng):
        ps = ParamStore()
        ps.add("a", rng.standard_normal(3))
        ps.add("b", rng.standard_normal(3))
        rep = finite_diff_gradcheck(lambda p: tsum(p["a"] * p["b"]), ps, corrupt="b")
        assert not rep.passed and rep.worst_name == "b"

    def test_primitives(self, f64, rng, backend):
        ps = ParamStore(rng_seed=11)
        ps.add("x", rng.standard_normal((12, 5, 3)))
        ps.add("k", rng.standard_normal((3, 3, 4)))
        ps.add("kb", rng.standard_normal(4))
        ps.add("g", rng.standard_normal(4) + 1.0)
        ps.add("b", rng.standard_normal(4))
        ps.add("w", rng.standard_normal((4, 2)))
        ps.add("q", rng.standard_normal((2, 3, 4)))
        offsets = [0, 5, 12]

        def loss(p):
            h = temporal_conv(p["x"], p["k"], p["kb"], stride=2)
            h = relu(layer_norm(h, p["g"], p["b"]))
            pooled = pool_sites(h, offsets)
            logits = affine(pooled, p["w"])
            pr = softmax(logits)
            out, _ = attention(p["q"], p["q"], p["q"])
            return tsum(log(pr) * pr) + tsum(out * out) + tsum(mean(pooled, axis=1, canonical=True))

        rep = finite_diff_gradcheck(loss, ps)
        assert rep.passed, rep

    def test_neighborhood(self, f64, rng):
        ps = ParamStore()
        ps.add("x", rng.standard_normal((2 * 3 * 4, 3, 2)))
        ps.add("w", rng.standard_normal((18, 1)))
        rep = finite_diff_gradcheck(lambda p: None, ps) \
            if False else finite_diff_gradcheck(
                lambda p: tsum(relu(affine(neighborhood3x3(p["x"], 2, 3, 4), p["w"]))), ps)
        assert rep.passed


class TestPool:
    def test_backends_bit_identical(self, rng):
        x = rng.standard_normal((300, 4, 5)).astype(np.float32) * np.logspace(-3, 3, 5).astype(np.float32)
        off = np.array([0, 1, 100, 300])
        a = _kernels_py.pool_exact(x, off)
        if kernels.HAVE_COMPILED:
            from sdr.substrate import _kernels
            assert np.array_equal(a, _kernels.pool_exact(x, off))

    def test_close_to_mean(self, f64, rng):
        x = rng.standard_normal((64, 3, 2))
        out = pool_sites(tensor(x), [0, 64]).data
        np.testing.assert_allclose(out[0], x.mean(axis=0), rtol=0, atol=1e-13)

    def test_permutation_and_tiling_exact(self, rng, backend):
        x = rng.standard_normal((40, 3, 4)).astype(np.float32)
        base = pool_sites(tensor(x), [0, 40]).data
        perm = pool_sites(tensor(x[rng.permutation(40)]), [0, 40]).data
        tiled = pool_sites(tensor(np.concatenate([x] * 4)), [0, 160]).data
        assert np.array_equal(base, perm)
        assert np.array_equal(base, tiled)

    def test_empty_segment(self):
        with pytest.raises(ShapeError):
            pool_sites(tensor(np.zeros((3, 2, 1))), [0, 3, 3])


def test_attention_rows_sum_to_one(rng):
    q = tensor(rng.standard_normal((2, 4, 5, 8)))
    _, w = attention(q, q, q)
    np.testing.assert_allclose(w.data.sum(-1), 1.0, atol=1e-6)

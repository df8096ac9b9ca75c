import math

import numpy as np
import pytest

from sdr.substrate import ParamStore, ShapeError, finite_diff_gradcheck, tensor
from sdr.trfi import drop_block, init_heads, integrate, kl, mi_loss, predict_full, predict_loo


def heads(n, D, seed=0):
    store = ParamStore(seed)
    init_heads(store, n, D)
    return store


def zero_heads(store):
    for name in store:
        store[name].data[...] = 0


class TestIntegrate:
    def test_single_branch_is_identity(self, rng):
        z = tensor(rng.standard_normal((2, 4, 3)))
        assert integrate([z]) is z

    def test_layout_and_roundtrip(self, rng):
        zs = [tensor(rng.standard_normal((2, 4, 3))) for _ in range(3)]
        Z = integrate(zs)
        assert Z.shape == (2, 4, 9)
        for i, z in enumerate(zs):
            np.testing.assert_array_equal(Z.data[..., 3 * i:3 * (i + 1)], z.data)

    def test_mismatch(self, rng):
        with pytest.raises(ShapeError):
            integrate([tensor(np.zeros((1, 4, 3))), tensor(np.zeros((1, 5, 3)))])

    def test_drop_block(self, rng):
        zs = [tensor(rng.standard_normal((1, 2, 2))) for _ in range(3)]
        out = drop_block(integrate(zs), 1, 3).data
        np.testing.assert_array_equal(out, np.concatenate([zs[0].data, zs[2].data], -1))


class TestPredict:
    def test_zero_head_is_uniform(self, rng):
        store = heads(2, 3)
        zero_heads(store)
        Z = tensor(rng.standard_normal((2, 4, 6)))
        np.testing.assert_allclose(predict_full(Z, store).data, 0.5)
        np.testing.assert_allclose(predict_loo(Z, 0, store, 2).data, 0.5)

    def test_hand_softmax(self, f64):
        store = heads(1, 1)
        store["trfi.full.w"].data[...] = 0
        store["trfi.full.b"].data[:] = [math.log(1), math.log(3)]
        np.testing.assert_allclose(predict_full(tensor(np.zeros((1, 2, 1))), store).data, [[0.25, 0.75]], atol=1e-12)

    def test_temporal_permutation_invariant(self, rng):
        store = heads(2, 3)
        Z = rng.standard_normal((2, 5, 6))
        perm = rng.permutation(5)
        assert np.array_equal(predict_full(tensor(Z), store).data, predict_full(tensor(Z[:, perm]), store).data)

    def test_loo_ignores_own_block(self, rng):
        store = heads(3, 2)
        Z = rng.standard_normal((2, 4, 6))
        Zp = Z.copy()
        Zp[..., 2:4] += rng.standard_normal((2, 4, 2)) * 10
        assert np.array_equal(predict_loo(tensor(Z), 1, store, 3).data, predict_loo(tensor(Zp), 1, store, 3).data)

    def test_index_out_of_range(self, rng):
        with pytest.raises(IndexError):
            predict_loo(tensor(np.zeros((1, 2, 4))), 2, heads(2, 2), 2)

    def test_clamped_and_normalized(self):
        store = heads(1, 1)
        store["trfi.full.b"].data[:] = [0.0, 60.0]
        p = predict_full(tensor(np.zeros((1, 2, 1), np.float32)), store).data
        assert p.min() >= 1e-7 * 0.999
        assert abs(p.sum() - 1) < 1e-6


class TestMILoss:
    def test_hand_example(self, f64):
        # n=1: the leave-one-out head has no inputs, only a bias
        store = heads(1, 1)
        zero_heads(store)
        store["trfi.full.b"].data[:] = [math.log(3), 0.0]
        l_mi, k = mi_loss(tensor(np.zeros((1, 2, 1))), store, 1)
        assert abs(k[0] - (0.75 * math.log(1.5) + 0.25 * math.log(0.5))) < 1e-9
        assert abs(float(l_mi.data) - math.exp(-0.130812)) < 1e-6

    def test_identical_heads_give_one(self, rng):
        store = heads(3, 2)
        zero_heads(store)
        for name in ("trfi.full.b", "trfi.loo0.b", "trfi.loo1.b", "trfi.loo2.b"):
            store[name].data[:] = [0.3, -0.4]
        l_mi, k = mi_loss(tensor(rng.standard_normal((4, 3, 6))), store, 3)
        assert abs(float(l_mi.data) - 1.0) < 1e-6
        assert np.all(np.abs(k) < 1e-6)

    def test_bounds_and_kl_nonnegative(self, rng):
        for seed in range(10):
            store = heads(4, 3, seed)
            l_mi, k = mi_loss(tensor(rng.standard_normal((5, 3, 12)) * 5), store, 4)
            assert 0 < float(l_mi.data) <= 1
            assert np.all(k >= -1e-6)

    def test_kl_of_equal_is_zero(self):
        p = tensor(np.array([[0.2, 0.8]]))
        assert float(kl(p, p).data[0]) == 0.0

    def test_gradcheck(self, rng, f64):
        store = heads(3, 2, seed=5)
        Z = tensor(rng.standard_normal((3, 4, 6)), requires_grad=False)
        z_param = store.add("z", Z.data)

        def loss(p):
            return mi_loss(p["z"], p, 3)[0]

        assert z_param is store["z"]
        assert finite_diff_gradcheck(loss, store).passed

"""Task-relevant feature integration and the mutual-information loss.

The joint representation concatenates branch sequences along channels.
One affine head predicts from all of it; one head per branch predicts with
that branch's channels removed. The loss is exp(-mean_s sum_i KL(P_full || P_loo_i)).
"""
import numpy as np

from .substrate import (
    ShapeError,
    affine,
    clamp_min,
    concat,
    div,
    exp,
    kaiming_uniform,
    log,
    mean,
    mul,
    softmax,
    sub,
    tsum,
)

PROB_EPS = 1e-7


def integrate(z):
    """Channel-wise concatenation in branch order: n x [B, T', D] -> [B, T', n*D]."""
    if len({t.shape for t in z}) != 1:
        raise ShapeError(f"branch outputs disagree: {[t.shape for t in z]}")
    return z[0] if len(z) == 1 else concat(z, axis=-1)


def drop_block(Z, i, n):
    """Z without branch i's channel block."""
    D = Z.shape[-1] // n
    keep = [Z[..., j * D:(j + 1) * D] for j in range(n) if j != i]
    if not keep:
        return Z[..., :0]
    return keep[0] if len(keep) == 1 else concat(keep, axis=-1)


def init_heads(store, n, D, num_classes=2):
    rng = np.random.default_rng(store.rng_seed + 1000)
    store.add("trfi.full.w", kaiming_uniform(rng, (n * D, num_classes), n * D))
    store.add("trfi.full.b", np.zeros(num_classes))
    for i in range(n):
        fan = (n - 1) * D
        store.add(f"trfi.loo{i}.w", kaiming_uniform(rng, (fan, num_classes), fan))
        store.add(f"trfi.loo{i}.b", np.zeros(num_classes))


def _distribution(feats, w, b):
    pooled = mean(feats, axis=-2, canonical=True)
    p = clamp_min(softmax(affine(pooled, w, b)), PROB_EPS)
    return div(p, tsum(p, axis=-1, keepdims=True))


def predict_full(Z, store):
    return _distribution(Z, store["trfi.full.w"], store["trfi.full.b"])


def predict_loo(Z, i, store, n):
    if not 0 <= i < n:
        raise IndexError(f"branch index {i} outside [0, {n})")
    return _distribution(drop_block(Z, i, n), store[f"trfi.loo{i}.w"], store[f"trfi.loo{i}.b"])


def kl(p, q):
    """Per-row KL(p || q) over the last axis."""
    return tsum(mul(p, sub(log(p), log(q))), axis=-1)


def mi_loss(Z, store, n):
    """Returns (L_MI, per-sample sum of KL terms as a numpy array)."""
    p_full = predict_full(Z, store)
    total = None
    for i in range(n):
        k = kl(p_full, predict_loo(Z, i, store, n))
        total = k if total is None else total + k
    return exp(mul(mean(total), -1.0)), total.data.copy()

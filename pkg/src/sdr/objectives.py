"""Contrastive, cross-entropy and weighted total losses."""
import logging
from dataclasses import dataclass

import numpy as np

from .substrate import (
    ShapeError,
    add,
    as_tensor,
    div,
    exp,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    sqrt,
    sub,
    transpose,
    tsum,
)

log_ = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 1.0

    def __post_init__(self):
        w = (self.alpha, self.beta, self.gamma)
        if min(w) < 0 or max(w) == 0:
            raise ValueError(f"loss weights must be nonnegative and not all zero: {w}")


def unit_reps(Z):
    """Temporal mean-pool then L2-normalize: [B, T', F] -> [B, F]."""
    pooled = mean(Z, axis=-2, canonical=True)
    norm = sqrt(add(tsum(mul(pooled, pooled), axis=-1, keepdims=True), 1e-12))
    return div(pooled, norm)


def _log_sum_exp(sims, tau, mask=None):
    """Row-wise log sum exp(sims / tau), shifted by the row max (a constant)."""
    d = sims.data if mask is None else np.where(mask > 0, sims.data, -np.inf)
    m = d.max(axis=1, keepdims=True)
    shift = m if mask is None else np.where(mask > 0, m, sims.data)
    e = exp(mul(sub(sims, shift), 1.0 / tau))
    if mask is not None:
        e = mul(e, mask)
    return add(log(tsum(e, axis=1)), m[:, 0] / tau)


def _log_ratio(anchor, same, other, tau):
    off_diag = 1.0 - np.eye(anchor.shape[0], dtype=anchor.data.dtype)
    log_pos = _log_sum_exp(matmul(anchor, transpose(same, (1, 0))), tau, off_diag)
    log_neg = _log_sum_exp(matmul(anchor, transpose(other, (1, 0))), tau)
    top = np.maximum(log_pos.data, log_neg.data)
    log_all = add(log(add(exp(sub(log_pos, top)), exp(sub(log_neg, top)))), top)
    return sub(log_pos, log_all)


def contrastive_loss(z_real, z_fake, tau=0.1):
    """Two-sided contrastive loss over balanced real/fake unit vectors [B, F].

    Returns None (term skipped) when fewer than two samples per class.
    """
    z_real, z_fake = as_tensor(z_real), as_tensor(z_fake)
    if z_real.shape != z_fake.shape:
        raise ShapeError(f"unbalanced contrastive batch: {z_real.shape} vs {z_fake.shape}")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    B = z_real.shape[0]
    if B < 2:
        log_.warning("contrastive term skipped: need at least 2 samples per class, got %d", B)
        return None
    terms = add(tsum(_log_ratio(z_real, z_real, z_fake, tau)), tsum(_log_ratio(z_fake, z_fake, z_real, tau)))
    return mul(terms, -1.0 / (2 * B))


def cross_entropy(logits, labels):
    """Mean of -log softmax(logits)[label] over the batch; logits [B, K] or [K]."""
    logits = as_tensor(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    lp = log_softmax(logits)
    if lp.ndim == 1:
        lp = lp[None]
    onehot = np.zeros(lp.shape, dtype=lp.data.dtype)
    onehot[np.arange(len(labels)), labels] = 1.0
    return mul(tsum(mul(lp, onehot)), -1.0 / len(labels))


def total_loss(weights, l_mi, l_con, l_ce):
    """alpha*L_MI + beta*L_Con + gamma*L_CE; None terms contribute nothing."""
    total = None
    for w, term in ((weights.alpha, l_mi), (weights.beta, l_con), (weights.gamma, l_ce)):
        if term is None or w == 0:
            continue
        part = mul(as_tensor(term), float(w))
        total = part if total is None else add(total, part)
    if total is None:
        return as_tensor(0.0)
    return total

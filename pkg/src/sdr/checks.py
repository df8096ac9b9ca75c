"""Gradient check of every loss term on a tiny end-to-end model."""
import numpy as np

from .clipgen import DatasetSpec, Cell, FAKE, REAL, gen_dataset
from .objectives import contrastive_loss, cross_entropy, total_loss, unit_reps
from .spb import SPBConfig
from .substrate import finite_diff_gradcheck, precision
from .trainer import SDRModel, TrainConfig
from .trfi import mi_loss
from .ttransformer import TransformerConfig

TERMS = ("l_mi", "l_con", "l_ce", "total")


def tiny_model(seed=0, T=4, H=4, W=4, channels=4, n_branches=2, batch_size=4):
    """A float64 model plus one fixed augmented batch (augmentation is drawn once)."""
    cfg = TrainConfig(n_branches=n_branches, batch_size=batch_size, seed=seed,
                      spb=SPBConfig(channels=channels, blocks=2, strides=(1, 1)),
                      transformer=TransformerConfig(d_model=8, heads=2))
    half = batch_size // 2
    spec = DatasetSpec(cells=[Cell(REAL, 2, half), Cell(FAKE, 2, half)], T=T, H=max(H, 8), W=max(W, 8),
                       seed=seed, strength=1.0)
    clips, _ = gen_dataset(spec)
    # the generator needs room for motion; checks run on the top-left H x W window
    for c in clips:
        c.frames = np.ascontiguousarray(c.frames[:, :, :H, :W])
    model = SDRModel(cfg, T, 3)
    inputs = model.branch_inputs(clips, np.random.default_rng(seed))
    labels = np.array([c.label for c in clips])
    return model, inputs, labels


def loss_terms(model, inputs, labels):
    cfg = model.cfg
    Z, logits = model.forward(inputs)
    l_mi, _ = mi_loss(Z, model.store, cfg.n_branches)
    reps = unit_reps(Z)
    l_con = contrastive_loss(reps[np.flatnonzero(labels == REAL)], reps[np.flatnonzero(labels == FAKE)], cfg.tau)
    l_ce = cross_entropy(logits, labels)
    return dict(l_mi=l_mi, l_con=l_con, l_ce=l_ce, total=total_loss(cfg.weights, l_mi, l_con, l_ce))


def run(seed=0, h=1e-5, tol=1e-4, corrupt=None, terms=TERMS, **dims):
    """Returns {term: GradcheckReport}. ``corrupt`` = (term, tensor name) self-test hook."""
    out = {}
    with precision("float64"):
        model, inputs, labels = tiny_model(seed, **dims)
        for term in terms:
            target = corrupt[1] if corrupt and corrupt[0] in (term, "all") else None
            out[term] = finite_diff_gradcheck(lambda p, t=term: loss_terms(model, inputs, labels)[t],
                                              model.store, h=h, tol=tol, corrupt=target)
    return out

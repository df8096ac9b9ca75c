"""End-to-end training and evaluation.

Per step: augment each clip once per branch, run the branches, concatenate,
compute L_MI / L_Con / L_CE, backpropagate the weighted total and take one
Adam step over every parameter. Everything is driven by seeded generators,
so a (config, data) pair fixes the run bit for bit.
"""
import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from . import metrics, tpa
from .clipgen import FAKE, REAL
from .objectives import LossWeights, contrastive_loss, cross_entropy, total_loss, unit_reps
from .spb import SPBConfig, branch_forward, init_branches
from .substrate import NumericError, ParamStore, adam_step, precision, softmax
from .trfi import init_heads, integrate, mi_loss
from .ttransformer import TransformerConfig, classify, init_transformer

log = logging.getLogger(__name__)

AUGMENTATIONS = ("tpa", "per_frame", "none")


class ConfigError(ValueError):
    pass


class TrainingDivergence(RuntimeError):
    def __init__(self, step, cause):
        super().__init__(f"non-finite value at step {step}: {cause}")
        self.step = step


@dataclass
class TrainConfig:
    n_branches: int = 4
    epochs: int = 10
    batch_size: int = 16
    lr: float = 1e-4
    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 1.0
    tau: float = 0.1
    seed: int = 0
    augmentation: str = "tpa"
    trfi: bool = True
    eval_every: int = 0
    max_steps: int = 0
    precision: str = "float32"
    spb: SPBConfig = field(default_factory=SPBConfig)
    transformer: TransformerConfig = field(default_factory=TransformerConfig)

    def __post_init__(self):
        if self.spb.n_branches != self.n_branches:
            self.spb = dataclasses.replace(self.spb, n_branches=self.n_branches)

    @property
    def weights(self):
        return LossWeights(self.alpha, self.beta, self.gamma)

    def validate(self):
        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigError("batch_size must be even and at least 2 (balanced sampling)")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.augmentation not in AUGMENTATIONS:
            raise ConfigError(f"augmentation must be one of {AUGMENTATIONS}")
        if not 1 <= self.n_branches <= tpa.MAX_BRANCHES:
            raise ConfigError(f"n_branches must be in [1, {tpa.MAX_BRANCHES}]")
        if not self.trfi and self.n_branches != 1:
            raise ConfigError("without TRFI there is exactly one branch")
        if self.tau <= 0 or self.lr <= 0:
            raise ConfigError("tau and lr must be positive")
        for name, check in (("weights", lambda: self.weights), ("spb", self.spb.validate),
                            ("transformer", self.transformer.validate)):
            try:
                check()
            except ValueError as exc:
                raise ConfigError(f"{name}: {exc}") from exc

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


class SDRModel:
    """Parameters plus the forward pipeline for one configuration."""

    def __init__(self, cfg, T, C):
        cfg.validate()
        cfg.spb.validate(T)
        self.cfg = cfg
        self.T = T
        self.store = ParamStore(rng_seed=cfg.seed)
        n, D = cfg.n_branches, cfg.spb.channels
        init_branches(self.store, cfg.spb, C)
        if cfg.trfi:
            init_heads(self.store, n, D)
        init_transformer(self.store, cfg.transformer, n * D, cfg.spb.out_len(T))

    def branch_inputs(self, clips, rng=None):
        """Per-branch lists of frame arrays; ``rng=None`` means evaluation (identity)."""
        n = self.cfg.n_branches
        per_clip = []
        for c in clips:
            if rng is None or self.cfg.augmentation == "none":
                per_clip.append(tpa.identity_branches(c, n))
            elif self.cfg.augmentation == "tpa":
                per_clip.append(tpa.apply_all_branches(c, rng, n))
            else:
                per_clip.append(tpa.incoherent_branches(c, rng, n))
        return [[pc[i].frames for pc in per_clip] for i in range(n)]

    def forward(self, branch_batches):
        z = [branch_forward(b, self.store, i, self.cfg.spb) for i, b in enumerate(branch_batches)]
        Z = integrate(z)
        return Z, classify(Z, self.store, self.cfg.transformer)

    def scores(self, clips, batch=64):
        out = []
        for s in range(0, len(clips), batch):
            chunk = clips[s:s + batch]
            _, logits = self.forward(self.branch_inputs(chunk))
            out.append(softmax(logits).data[:, FAKE])
        return np.concatenate(out).astype(np.float64)

    def num_parameters(self, prefix=""):
        return self.store.num_parameters(prefix)


def step_losses(model, clips, rng):
    """Forward one balanced batch and return the loss tensors (no backward)."""
    cfg = model.cfg
    labels = np.array([c.label for c in clips])
    Z, logits = model.forward(model.branch_inputs(clips, rng))
    l_ce = cross_entropy(logits, labels)
    l_mi, kl = (None, None)
    if cfg.trfi:
        l_mi, kl = mi_loss(Z, model.store, cfg.n_branches)
    reps = unit_reps(Z)
    l_con = contrastive_loss(reps[np.flatnonzero(labels == REAL)], reps[np.flatnonzero(labels == FAKE)], cfg.tau)
    total = total_loss(cfg.weights, l_mi, l_con, l_ce)
    return dict(l_mi=l_mi, l_con=l_con, l_ce=l_ce, total=total, kl=kl)


def train_step(model, clips, rng, step_index):
    parts = step_losses(model, clips, rng)
    model.store.zero_grad()
    parts["total"].backward()
    adam_step(model.store, model.cfg.lr, step_index=step_index)
    return parts


class BalancedSampler:
    """Epoch-wise shuffled batches with batch_size/2 real and batch_size/2 fake clips."""

    def __init__(self, clips, batch_size, seed):
        self.clips = clips
        self.half = batch_size // 2
        self.real = [i for i, c in enumerate(clips) if c.label == REAL]
        self.fake = [i for i, c in enumerate(clips) if c.label == FAKE]
        if len(self.real) < self.half or len(self.fake) < self.half:
            raise ConfigError(f"need at least {self.half} clips per class for a balanced batch")
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))

    def steps_per_epoch(self):
        return min(len(self.real), len(self.fake)) // self.half

    def epoch(self):
        r = self.rng.permutation(self.real)
        f = self.rng.permutation(self.fake)
        for s in range(self.steps_per_epoch()):
            idx = np.concatenate([r[s * self.half:(s + 1) * self.half], f[s * self.half:(s + 1) * self.half]])
            yield [self.clips[i] for i in idx]


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def log_step(self, step, epoch, parts):
        def val(t):
            return None if t is None else float(t.data)

        self.records.append(dict(
            record="step", step=step, epoch=epoch,
            l_mi=val(parts["l_mi"]), l_con=val(parts["l_con"]), l_ce=val(parts["l_ce"]),
            total=val(parts["total"]),
            kl_sum=None if parts["kl"] is None else float(np.mean(parts["kl"])),
        ))

    def log_eval(self, step, epoch, split, m):
        self.records.append(dict(record="eval", step=step, epoch=epoch, split=split, auc=m["auc"], acc=m["acc"]))

    def steps(self):
        return [r for r in self.records if r["record"] == "step"]

    def evals(self):
        return [r for r in self.records if r["record"] == "eval"]

    def rows(self):
        return self.records


def evaluate(model, clips):
    """Video-level AUC and ACC; scores are P(fake) with identity augmentation."""
    if not clips:
        raise ValueError("cannot evaluate an empty split")
    s = model.scores(clips)
    vs, vl = metrics.video_level(s, [c.label for c in clips], [c.video_id for c in clips])
    both = len(set(vl.tolist())) == 2
    return dict(auc=metrics.auc(vs, vl) if both else float("nan"), acc=metrics.acc(vs, vl))


def train(cfg, train_clips, eval_splits=None, on_step=None):
    """Train from scratch. Returns (model, history, final metrics per split)."""
    eval_splits = eval_splits or {}
    with precision(cfg.precision):
        T, C = train_clips[0].frames.shape[:2]
        model = SDRModel(cfg, T, C)
        sampler = BalancedSampler(train_clips, cfg.batch_size, cfg.seed)
        aug_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
        history = TrainHistory()
        step = 0
        done = False
        for epoch in range(1, cfg.epochs + 1):
            for batch in sampler.epoch():
                step += 1
                try:
                    parts = train_step(model, batch, aug_rng, step)
                except NumericError as exc:
                    raise TrainingDivergence(step, exc) from exc
                history.log_step(step, epoch, parts)
                if on_step is not None:
                    on_step(step, parts)
                if cfg.max_steps and step >= cfg.max_steps:
                    done = True
                    break
            last = done or epoch == cfg.epochs
            if last or (cfg.eval_every and epoch % cfg.eval_every == 0):
                for split, clips in eval_splits.items():
                    history.log_eval(step, epoch, split, evaluate(model, clips))
            if done:
                break
        final = {r["split"]: dict(auc=r["auc"], acc=r["acc"]) for r in history.evals() if r["step"] == step}
    return model, history, final


# ---------------------------------------------------------------- experiments

ABLATION_ROWS = (
    (False, False, False),
    (False, True, False),
    (True, True, False),
    (True, True, True),
)


def ablation_config(cfg, tpa_on, trfi_on, contrastive_on):
    if tpa_on and not trfi_on:
        raise ConfigError("TPA cannot stay on when TRFI is removed")
    kw = dict(augmentation="tpa" if tpa_on else "per_frame")
    if not trfi_on:
        kw.update(trfi=False, n_branches=1, alpha=0.0)
    if not contrastive_on:
        kw.update(beta=0.0)
    return cfg.replace(**kw)


def baseline_config(cfg):
    """Spatially-mixing reference: 3x3 spatial kernels, one branch, no augmentation, no TRFI."""
    out = cfg.replace(trfi=False, n_branches=1, alpha=0.0, augmentation="none")
    out.spb = dataclasses.replace(out.spb, spatial_kernel=3)
    return out


def run_ablation(cfg, train_clips, test_clips, rows=ABLATION_ROWS):
    """One metrics row per (tpa, trfi, contrastive) toggle set, on the test split."""
    table = []
    for tpa_on, trfi_on, con_on in rows:
        c = ablation_config(cfg, tpa_on, trfi_on, con_on)
        model, _, final = train(c, train_clips, {"test": test_clips})
        table.append(dict(tpa=tpa_on, trfi=trfi_on, contrastive=con_on, seed=cfg.seed,
                          auc=final["test"]["auc"], acc=final["test"]["acc"],
                          n_params=model.num_parameters("spb.")))
    return table

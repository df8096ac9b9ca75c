"""JSON run configuration.

Every document carries ``"version": 1``. Unknown keys anywhere are errors, so
a typo can never silently fall back to a default. Field-level messages name
the offending path (``spb.kt``, ``splits.train.cells[2].count``).
"""
import dataclasses
import hashlib
import json

from .clipgen import Cell, DatasetSpec, SpecificationError
from .spb import SPBConfig
from .trainer import ConfigError, TrainConfig
from .ttransformer import TransformerConfig

VERSION = 1


def load(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if doc.get("version") != VERSION:
        raise ConfigError(f"version: expected {VERSION}, got {doc.get('version')!r}")
    return doc


def digest(doc):
    """sha256 of the canonical JSON form (sorted keys, no whitespace)."""
    return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where or 'config'}: expected an object")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{where + '.' if where else ''}{unknown[0]}: unknown key")


def _build(cls, d, where, convert=None):
    names = [f.name for f in dataclasses.fields(cls)]
    _check_keys(d, names, where)
    kw = dict(d)
    for k, fn in (convert or {}).items():
        if k in kw:
            kw[k] = fn(kw[k])
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


# ---------------------------------------------------------------- datasets

def _cells(items, where):
    if not isinstance(items, list):
        raise ConfigError(f"{where}: expected a list")
    return [_build(Cell, c, f"{where}[{i}]") for i, c in enumerate(items)]


def dataset_spec(d, where):
    spec = _build(DatasetSpec, d, where, {"cells": lambda v: _cells(v, where + ".cells")})
    try:
        spec.validate()
    except SpecificationError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return spec


STYLE_SHIFT_KEYS = ("train_count", "test_count", "style_a", "style_b", "seed",
                    "T", "C", "H", "W", "kind", "strength", "noise_floor")


def style_shift(d, where="style_shift"):
    """Style-shift settings -> (split counts and styles, data seed, DatasetSpec kwargs)."""
    _check_keys(d, STYLE_SHIFT_KEYS, where)
    d = dict(d)
    counts = dict(train_count=d.pop("train_count", 400), test_count=d.pop("test_count", 200),
                  style_a=d.pop("style_a", 0), style_b=d.pop("style_b", 1))
    seed = d.pop("seed", 0)
    for k in ("train_count", "test_count"):
        if not isinstance(counts[k], int) or counts[k] < 2 or counts[k] % 2:
            raise ConfigError(f"{where}.{k}: must be an even integer >= 2")
    return counts, seed, d


def data_splits(doc):
    """Dataset document -> {split: DatasetSpec}. Exactly one of ``splits`` / ``style_shift``."""
    from .clipgen import style_shift_specs

    _check_keys(doc, ("version", "splits", "style_shift"), "")
    if ("splits" in doc) == ("style_shift" in doc):
        raise ConfigError("exactly one of 'splits' or 'style_shift' is required")
    if "splits" in doc:
        if not isinstance(doc["splits"], dict) or not doc["splits"]:
            raise ConfigError("splits: expected a nonempty object")
        return {name: dataset_spec(d, f"splits.{name}") for name, d in doc["splits"].items()}
    counts, seed, kw = style_shift(doc["style_shift"])
    try:
        specs = style_shift_specs(seed=seed, **counts, **kw)
        for s in specs.values():
            s.validate()
    except (TypeError, SpecificationError) as exc:
        raise ConfigError(f"style_shift: {exc}") from exc
    return specs


# ---------------------------------------------------------------- training

RUN_KEYS = ("version", "spb", "transformer", "train_split", "eval_splits", "seeds", "n_list", "style_shift",
            "gradcheck")
GRADCHECK_KEYS = ("seed", "h", "tol", "T", "H", "W", "channels", "n_branches", "batch_size")


def train_config(doc):
    """Run document -> TrainConfig (validated)."""
    train_fields = [f.name for f in dataclasses.fields(TrainConfig) if f.name not in ("spb", "transformer")]
    _check_keys(doc, RUN_KEYS + tuple(train_fields), "")
    kw = {k: doc[k] for k in train_fields if k in doc}
    spb_d = dict(doc.get("spb", {}))
    _check_keys(spb_d, [f.name for f in dataclasses.fields(SPBConfig) if f.name != "n_branches"], "spb")
    if "strides" in spb_d:
        spb_d["strides"] = tuple(spb_d["strides"])
    spb = _build(SPBConfig, spb_d, "spb")
    tt = _build(TransformerConfig, doc.get("transformer", {}), "transformer")
    try:
        cfg = TrainConfig(spb=spb, transformer=tt, **kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def run_options(doc):
    """Non-trainer keys with their defaults."""
    seeds = doc.get("seeds", [doc.get("seed", 0)])
    n_list = doc.get("n_list", [1, 2, 3, 4, 5])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds: expected a nonempty list of integers")
    if not isinstance(n_list, list) or not all(isinstance(n, int) and 1 <= n <= 5 for n in n_list):
        raise ConfigError("n_list: expected integers in [1, 5]")
    eval_splits = doc.get("eval_splits")
    if eval_splits is not None and not (isinstance(eval_splits, list) and all(isinstance(s, str) for s in eval_splits)):
        raise ConfigError("eval_splits: expected a list of split names")
    gc = doc.get("gradcheck", {})
    _check_keys(gc, GRADCHECK_KEYS, "gradcheck")
    return dict(train_split=doc.get("train_split", "train"), eval_splits=eval_splits,
                seeds=seeds, n_list=n_list, style_shift=doc.get("style_shift", {}), gradcheck=gc)

"""Temporal transformer head: projection, CLS token, pre-norm encoder, readout."""
from dataclasses import dataclass

import numpy as np

from .substrate import (
    ShapeError,
    add,
    affine,
    attention,
    broadcast_to,
    concat,
    kaiming_uniform,
    layer_norm,
    relu,
    reshape,
    transpose,
)


@dataclass
class TransformerConfig:
    d_model: int = 32
    heads: int = 4
    blocks: int = 1
    mlp_ratio: int = 2
    use_positional: bool = True

    def validate(self):
        if self.d_model % self.heads:
            raise ShapeError(f"d_model {self.d_model} not divisible by heads {self.heads}")


def init_transformer(store, cfg, in_width, seq_len, num_classes=2):
    """Register parameters under ``tt.``; the positional table is sized for seq_len + 1."""
    cfg.validate()
    rng = np.random.default_rng(store.rng_seed + 2000)
    d = cfg.d_model
    hidden = cfg.mlp_ratio * d
    store.add("tt.proj.w", kaiming_uniform(rng, (in_width, d), in_width))
    store.add("tt.proj.b", np.zeros(d))
    store.add("tt.cls", rng.standard_normal(d) * 0.02)
    if cfg.use_positional:
        store.add("tt.pos", np.zeros((seq_len + 1, d)))
    for j in range(cfg.blocks):
        q = f"tt.block{j}."
        for name, shape, fan in (("qkv", (d, 3 * d), d), ("out", (d, d), d),
                                 ("mlp1", (d, hidden), d), ("mlp2", (hidden, d), hidden)):
            store.add(q + name + ".w", kaiming_uniform(rng, shape, fan))
            store.add(q + name + ".b", np.zeros(shape[1]))
        for ln in ("ln1", "ln2"):
            store.add(q + ln + ".g", np.ones(d))
            store.add(q + ln + ".b", np.zeros(d))
    store.add("tt.ln.g", np.ones(d))
    store.add("tt.ln.b", np.zeros(d))
    store.add("tt.head.w", kaiming_uniform(rng, (d, num_classes), d))
    store.add("tt.head.b", np.zeros(num_classes))


def _self_attention(x, store, q, heads):
    B, L, d = x.shape
    dh = d // heads
    qkv = affine(x, store[q + "qkv.w"], store[q + "qkv.b"])
    qkv = transpose(reshape(qkv, (B, L, 3, heads, dh)), (2, 0, 3, 1, 4))
    out, weights = attention(qkv[0], qkv[1], qkv[2])
    out = reshape(transpose(out, (0, 2, 1, 3)), (B, L, d))
    return affine(out, store[q + "out.w"], store[q + "out.b"]), weights


def classify(Z, store, cfg, return_attention=False):
    """Z: [B, T', F] -> logits [B, 2], read from the CLS position."""
    B, T, _ = Z.shape
    d = cfg.d_model
    x = affine(Z, store["tt.proj.w"], store["tt.proj.b"])
    cls = broadcast_to(reshape(store["tt.cls"], (1, 1, d)), (B, 1, d))
    x = concat([cls, x], axis=1)
    if cfg.use_positional:
        pos = store["tt.pos"]
        if pos.shape[0] != T + 1:
            raise ShapeError(f"positional table holds {pos.shape[0] - 1} steps, input has {T}")
        x = add(x, pos)
    maps = []
    for j in range(cfg.blocks):
        q = f"tt.block{j}."
        a, w = _self_attention(layer_norm(x, store[q + "ln1.g"], store[q + "ln1.b"]), store, q, cfg.heads)
        maps.append(w.data)
        x = add(x, a)
        h = layer_norm(x, store[q + "ln2.g"], store[q + "ln2.b"])
        h = affine(relu(affine(h, store[q + "mlp1.w"], store[q + "mlp1.b"])), store[q + "mlp2.w"], store[q + "mlp2.b"])
        x = add(x, h)
    x = layer_norm(x, store["tt.ln.g"], store["tt.ln.b"])
    logits = affine(x[:, 0], store["tt.head.w"], store["tt.head.b"])
    return (logits, maps) if return_attention else logits

"""Spatial perturbation branch: a residual stack of Kt x 1 x 1 convolutions.

Every operation before the final pool acts on one spatial site at a time,
with weights shared across sites. The pool is exact (fixed-point), so a
branch output is bit-identical under any reordering of a clip's sites.
Setting ``spatial_kernel=3`` gives the Kt x 3 x 3 spatially-mixing baseline.
"""
from dataclasses import dataclass

import numpy as np

from .substrate import (
    ParamStore,
    ShapeError,
    affine,
    add,
    index,
    kaiming_uniform,
    layer_norm,
    neighborhood3x3,
    pool_sites,
    relu,
    tensor,
    temporal_conv,
)
from .substrate.kernels import conv_out_len


@dataclass
class SPBConfig:
    channels: int = 16
    blocks: int = 3
    kt: int = 3
    strides: tuple = (1, 1, 1)
    n_branches: int = 4
    spatial_kernel: int = 1

    def validate(self, T=None):
        if self.kt % 2 == 0:
            raise ShapeError(f"temporal kernel must be odd, got {self.kt}")
        if len(self.strides) != self.blocks or any(s < 1 for s in self.strides):
            raise ShapeError("need one positive stride per block")
        if self.spatial_kernel not in (1, 3):
            raise ShapeError("spatial_kernel must be 1 or 3")
        if T is not None and self.out_len(T) < 2:
            raise ShapeError(f"T={T} leaves fewer than 2 output steps")

    def out_len(self, T):
        pad = (self.kt - 1) // 2
        for s in self.strides:
            if T < self.kt:
                return 0
            T = conv_out_len(T, self.kt, s, pad)
        return T


def init_branch(store, i, cfg, in_channels):
    """Register branch ``i`` parameters under ``spb.{i}.``, seeded by store seed + i."""
    rng = np.random.default_rng(store.rng_seed + i)
    D = cfg.channels
    p = f"spb.{i}."
    store.add(p + "lift.w", kaiming_uniform(rng, (in_channels, D), in_channels))
    store.add(p + "lift.b", np.zeros(D))
    width = D * cfg.spatial_kernel ** 2
    for j in range(cfg.blocks):
        q = f"{p}block{j}."
        store.add(q + "ln.g", np.ones(D))
        store.add(q + "ln.b", np.zeros(D))
        store.add(q + "conv.k", kaiming_uniform(rng, (cfg.kt, width, D), cfg.kt * width))
        store.add(q + "conv.b", np.zeros(D))
        store.add(q + "proj.w", kaiming_uniform(rng, (D, D), D))
        store.add(q + "proj.b", np.zeros(D))


def init_branches(store, cfg, in_channels):
    for i in range(cfg.n_branches):
        init_branch(store, i, cfg, in_channels)


def clips_to_sites(frames_list):
    """Stack [T, C, H, W] clips into a [N, T, C] site array plus clip offsets."""
    T = frames_list[0].shape[0]
    blocks, offsets = [], [0]
    for f in frames_list:
        if f.shape[0] != T:
            raise ShapeError("clips in a batch must share T")
        t, c, h, w = f.shape
        if h * w == 0:
            raise ShapeError("clip has no spatial sites")
        blocks.append(f.transpose(2, 3, 0, 1).reshape(h * w, t, c))
        offsets.append(offsets[-1] + h * w)
    return np.concatenate(blocks, axis=0), np.array(offsets)


def branch_forward(frames_list, store, i, cfg):
    """Run branch ``i`` on a batch of clips. Returns a Tensor [B, T', D]."""
    sites, offsets = clips_to_sites(frames_list)
    p = f"spb.{i}."
    x = affine(tensor(sites), store[p + "lift.w"], store[p + "lift.b"])
    if cfg.spatial_kernel == 3:
        shapes = {f.shape[2:] for f in frames_list}
        if len(shapes) != 1:
            raise ShapeError("the spatial baseline needs equal frame sizes in a batch")
        (H, W), B = shapes.pop(), len(frames_list)
    for j, stride in enumerate(cfg.strides):
        q = f"{p}block{j}."
        h = layer_norm(x, store[q + "ln.g"], store[q + "ln.b"])
        if cfg.spatial_kernel == 3:
            h = neighborhood3x3(h, B, H, W)
        h = relu(temporal_conv(h, store[q + "conv.k"], store[q + "conv.b"], stride))
        h = affine(h, store[q + "proj.w"], store[q + "proj.b"])
        skip = x if stride == 1 else index(x, (slice(None), slice(None, None, stride)))
        x = add(skip[:, :h.shape[1]] if skip.shape[1] != h.shape[1] else skip, h)
    return pool_sites(x, offsets)


def forward_all(branch_batches, store, cfg):
    """``branch_batches[i]`` is the list of clip frames fed to branch i."""
    if len(branch_batches) != cfg.n_branches:
        raise ShapeError(f"expected {cfg.n_branches} branch inputs, got {len(branch_batches)}")
    Ts = {f.shape[0] for batch in branch_batches for f in batch}
    if len(Ts) != 1:
        raise ShapeError("branches disagree on T")
    return [branch_forward(batch, store, i, cfg) for i, batch in enumerate(branch_batches)]


def new_store(cfg, in_channels=3, seed=0):
    store = ParamStore(rng_seed=seed)
    init_branches(store, cfg, in_channels)
    return store

"""Temporally-preserved augmentation.

Each augmentation draws its parameters once per clip and applies them to
every frame, so frame-to-frame differences survive (up to the exact
transformations documented on :func:`apply`). The per-frame variants at the
bottom deliberately break that contract; they exist for the ablation that
removes TPA.
"""
import enum
import math
from dataclasses import dataclass, replace

import numpy as np


class AugKind(enum.Enum):
    ColorJitter = "ColorJitter"
    Cutout = "Cutout"
    Flip = "Flip"
    Crop = "Crop"


# Extra branch for the five-branch sweep; shares one noise field across frames.
GAUSSIAN_NOISE = "GaussianNoise"
NOISE_SIGMA = 0.05

BRANCH_KINDS = (AugKind.ColorJitter, AugKind.Cutout, AugKind.Flip, AugKind.Crop, GAUSSIAN_NOISE)
MAX_BRANCHES = len(BRANCH_KINDS)


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class ColorJitterParams:
    gain: tuple
    bias: tuple


@dataclass(frozen=True)
class CutoutParams:
    x: int
    y: int
    w: int
    h: int
    fill: float = 0.5


@dataclass(frozen=True)
class FlipParams:
    horizontal: bool = True


@dataclass(frozen=True)
class CropParams:
    x: int
    y: int
    w: int
    h: int


@dataclass(frozen=True)
class NoiseParams:
    field: np.ndarray  # [C, H, W]


def cutout_range(n):
    return math.ceil(n / 8), max(math.ceil(n / 8), n // 3)


def crop_min(n):
    return math.ceil(0.6 * n)


def sample_params(kind, rng, dims):
    """Draw parameters for ``kind`` given clip dims (T, C, H, W)."""
    _, C, H, W = dims
    if kind is AugKind.ColorJitter:
        return ColorJitterParams(tuple(rng.uniform(0.7, 1.3, C)), tuple(rng.uniform(-0.1, 0.1, C)))
    if kind is AugKind.Cutout:
        lo_w, hi_w = cutout_range(W)
        lo_h, hi_h = cutout_range(H)
        w = int(rng.integers(lo_w, hi_w + 1))
        h = int(rng.integers(lo_h, hi_h + 1))
        return CutoutParams(int(rng.integers(0, W - w + 1)), int(rng.integers(0, H - h + 1)), w, h)
    if kind is AugKind.Flip:
        return FlipParams()
    if kind is AugKind.Crop:
        w = int(rng.integers(crop_min(W), W + 1))
        h = int(rng.integers(crop_min(H), H + 1))
        return CropParams(int(rng.integers(0, W - w + 1)), int(rng.integers(0, H - h + 1)), w, h)
    if kind == GAUSSIAN_NOISE:
        return NoiseParams(rng.standard_normal((C, H, W)) * NOISE_SIGMA)
    raise ParameterError(f"unknown augmentation {kind!r}")


def _check_rect(p, H, W):
    if p.x < 0 or p.y < 0 or p.w < 1 or p.h < 1 or p.x + p.w > W or p.y + p.h > H:
        raise ParameterError(f"rectangle {p} outside {H}x{W} frame")


def apply_frames(frames, kind, params):
    """Apply one parameter set to a [T, C, H, W] (or [C, H, W]) array."""
    H, W = frames.shape[-2:]
    if kind is AugKind.ColorJitter:
        g = np.asarray(params.gain, dtype=np.float32)[:, None, None]
        b = np.asarray(params.bias, dtype=np.float32)[:, None, None]
        return np.clip(g * frames + b, 0.0, 1.0).astype(np.float32)
    if kind is AugKind.Cutout:
        _check_rect(params, H, W)
        out = frames.copy()
        out[..., params.y:params.y + params.h, params.x:params.x + params.w] = params.fill
        return out
    if kind is AugKind.Flip:
        return np.ascontiguousarray(frames[..., ::-1])
    if kind is AugKind.Crop:
        _check_rect(params, H, W)
        return np.ascontiguousarray(frames[..., params.y:params.y + params.h, params.x:params.x + params.w])
    if kind == GAUSSIAN_NOISE:
        return np.clip(frames + params.field.astype(np.float32), 0.0, 1.0).astype(np.float32)
    raise ParameterError(f"unknown augmentation {kind!r}")


def apply(clip, kind, params):
    return replace(clip, frames=apply_frames(clip.frames, kind, params))


def branch_kinds(n):
    if not 1 <= n <= MAX_BRANCHES:
        raise ValueError(f"number of branches must be in [1, {MAX_BRANCHES}], got {n}")
    return BRANCH_KINDS[:n]


def apply_all_branches(clip, rng, n=4):
    """Branch i gets augmentation kind i with freshly drawn parameters."""
    return [apply(clip, k, sample_params(k, rng, clip.frames.shape)) for k in branch_kinds(n)]


# ---------------------------------------------------------------- TPA removed

def sample_frame_params(kind, rng, dims):
    """Independent Flip/Crop parameters per frame. Crop keeps one window size
    per clip (frames must stack) but moves its offset every frame."""
    T, C, H, W = dims
    if kind is AugKind.Flip:
        return [bool(f) for f in rng.integers(0, 2, T)]
    if kind is AugKind.Crop:
        w = int(rng.integers(crop_min(W), W + 1))
        h = int(rng.integers(crop_min(H), H + 1))
        return [CropParams(int(rng.integers(0, W - w + 1)), int(rng.integers(0, H - h + 1)), w, h) for _ in range(T)]
    raise ParameterError(f"{kind} has no per-frame variant")


def apply_per_frame(clip, kind, frame_params):
    frames = []
    for f, p in zip(clip.frames, frame_params):
        if kind is AugKind.Flip:
            frames.append(f[..., ::-1] if p else f)
        else:
            frames.append(apply_frames(f, AugKind.Crop, p))
    return replace(clip, frames=np.ascontiguousarray(np.stack(frames)))


def incoherent_branches(clip, rng, n=4):
    """Branch clips with TPA removed: Flip and Crop vary per frame.

    A lone branch (n == 1) gets per-frame Flip followed by per-frame Crop.
    """
    if n == 1:
        out = apply_per_frame(clip, AugKind.Flip, sample_frame_params(AugKind.Flip, rng, clip.frames.shape))
        return [apply_per_frame(out, AugKind.Crop, sample_frame_params(AugKind.Crop, rng, out.frames.shape))]
    out = []
    for k in branch_kinds(n):
        if k in (AugKind.Flip, AugKind.Crop):
            out.append(apply_per_frame(clip, k, sample_frame_params(k, rng, clip.frames.shape)))
        else:
            out.append(apply(clip, k, sample_params(k, rng, clip.frames.shape)))
    return out


def identity_branches(clip, n):
    return [clip] * n

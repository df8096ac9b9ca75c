"""Synthetic video clips: smooth motion (real) versus injected temporal
inconsistency (fake), with spatial style as an independent confounder.

Styles differ by background texture *arrangement* (stripe orientation,
checkerboard, diagonal) and foreground colour. Palettes 0 and 1 share the
same colours and the same per-pixel value histogram, so the only thing
separating them is spatial layout.
"""
from dataclasses import dataclass

import numpy as np

REAL, FAKE = 0, 1
KINDS = ("position_jitter", "appearance_flicker", "local_frame_swap")
OBJECTS = ("blob", "rectangle")

_BG_LO = np.array([0.15, 0.20, 0.30])
_BG_HI = np.array([0.40, 0.35, 0.25])


@dataclass(frozen=True)
class Palette:
    texture: str
    foreground: tuple


PALETTES = {
    0: Palette("hstripes", (0.90, 0.75, 0.20)),
    1: Palette("vstripes", (0.90, 0.75, 0.20)),
    2: Palette("checker", (0.20, 0.80, 0.90)),
    3: Palette("diagonal", (0.95, 0.35, 0.60)),
}


class SpecificationError(ValueError):
    """Clip or dataset parameters cannot be realized."""


@dataclass(frozen=True)
class StyleSpec:
    palette_id: int = 0
    noise_floor: float = 0.02

    def __post_init__(self):
        if self.palette_id not in PALETTES:
            raise SpecificationError(f"unknown palette {self.palette_id}")
        if not 0.0 <= self.noise_floor <= 0.05:
            raise SpecificationError(f"noise_floor {self.noise_floor} outside [0, 0.05]")


@dataclass(frozen=True)
class MotionSpec:
    kind: str = "rectangle"
    position: tuple = (8.0, 8.0)
    velocity: tuple = (0.0, 0.0)
    jitter_sigma: float = 0.0
    # rectangle: (width, height); blob: (sigma, sigma)
    size: tuple = (4.0, 4.0)

    def half_extent(self):
        if self.kind == "rectangle":
            return self.size[0] / 2, self.size[1] / 2
        return 2 * self.size[0], 2 * self.size[1]


@dataclass
class Clip:
    frames: np.ndarray  # [T, C, H, W] float32 in [0, 1]
    label: int
    video_id: int = 0

    @property
    def dims(self):
        return self.frames.shape


@dataclass(frozen=True)
class Cell:
    label: int
    palette_id: int
    count: int


@dataclass
class DatasetSpec:
    cells: list
    T: int = 8
    C: int = 3
    H: int = 16
    W: int = 16
    seed: int = 0
    kind: str = "position_jitter"
    strength: float = 2.0
    noise_floor: float = 0.02
    id_offset: int = 0

    def validate(self):
        if self.T < 2:
            raise SpecificationError("T must be at least 2")
        if self.C not in (1, 3):
            raise SpecificationError("C must be 1 or 3")
        if min(self.H, self.W) < 8:
            raise SpecificationError("frames must be at least 8x8")
        if self.kind not in KINDS:
            raise SpecificationError(f"unknown inconsistency kind {self.kind!r}")
        if self.strength <= 0:
            raise SpecificationError("strength must be positive")
        if not self.cells:
            raise SpecificationError("dataset needs at least one cell")
        for c in self.cells:
            if c.label not in (REAL, FAKE) or c.count < 1 or c.palette_id not in PALETTES:
                raise SpecificationError(f"invalid cell {c}")
        StyleSpec(0, self.noise_floor)


# ---------------------------------------------------------------- rendering

def background(palette_id, C, H, W):
    tex = PALETTES[palette_id].texture
    yy, xx = np.mgrid[0:H, 0:W]
    if tex == "hstripes":
        hi = (yy // 2) % 2
    elif tex == "vstripes":
        hi = (xx // 2) % 2
    elif tex == "checker":
        hi = (yy // 2 + xx // 2) % 2
    else:
        hi = ((xx + yy) // 2) % 2
    bg = np.where(hi[None] == 1, _BG_HI[:, None, None], _BG_LO[:, None, None])
    return _channels(bg, C)


def _channels(arr, C):
    return arr if C == 3 else arr.mean(axis=0, keepdims=True)


def _overlap(lo, hi, n):
    edges = np.arange(n)
    return np.clip(np.minimum(edges + 1, hi) - np.maximum(edges, lo), 0.0, 1.0)


def object_alpha(motion, pos, H, W):
    """Anti-aliased coverage of the object centred at ``pos`` = (x, y)."""
    x, y = pos
    if motion.kind == "rectangle":
        w, h = motion.size
        return np.outer(_overlap(y - h / 2, y + h / 2, H), _overlap(x - w / 2, x + w / 2, W))
    sx, sy = motion.size
    cy = np.arange(H) + 0.5
    cx = np.arange(W) + 0.5
    return np.outer(np.exp(-((cy - y) ** 2) / (2 * sy * sy)), np.exp(-((cx - x) ** 2) / (2 * sx * sx)))


def _in_bounds(motion, pos, H, W):
    hx, hy = motion.half_extent()
    return hx <= pos[0] <= W - hx and hy <= pos[1] <= H - hy


def _clamp_pos(motion, pos, H, W):
    hx, hy = motion.half_extent()
    return (min(max(pos[0], hx), W - hx), min(max(pos[1], hy), H - hy))


def trajectory(motion, T):
    p0 = np.asarray(motion.position, dtype=float)
    v = np.asarray(motion.velocity, dtype=float)
    return p0[None] + np.arange(T)[:, None] * v[None]


def _streams(seed):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(3)]


def _render(positions, gains, style, motion, C, H, W, noise_rng):
    bg = background(style.palette_id, C, H, W)
    fg = _channels(np.array(PALETTES[style.palette_id].foreground)[:, None, None], C)
    frames = np.empty((len(positions), C, H, W))
    for t, (pos, g) in enumerate(zip(positions, gains)):
        a = object_alpha(motion, pos, H, W)[None]
        frames[t] = bg * (1 - a) + np.clip(fg * g, 0, 1) * a
    if style.noise_floor > 0:
        frames += noise_rng.uniform(-style.noise_floor, style.noise_floor, frames.shape)
    return np.clip(frames, 0.0, 1.0).astype(np.float32)


def gen_real_clip(seed, style, motion, T=8, C=3, H=16, W=16, video_id=0):
    """Object on a straight constant-velocity path over a static textured background."""
    if motion.jitter_sigma != 0:
        raise SpecificationError("real clips must have jitter_sigma == 0")
    positions = trajectory(motion, T)
    for p in positions:
        if not _in_bounds(motion, p, H, W):
            raise SpecificationError(f"trajectory leaves the frame at {tuple(p)}")
    _, noise_rng, _ = _streams(seed)
    frames = _render(positions, np.ones(T), style, motion, C, H, W, noise_rng)
    return Clip(frames, REAL, video_id)


def gen_fake_clip(seed, style, motion, kind="position_jitter", strength=2.0, T=8, C=3, H=16, W=16, video_id=0):
    """Same construction as a real clip, then per-frame independent perturbation."""
    if kind not in KINDS:
        raise SpecificationError(f"unknown inconsistency kind {kind!r}")
    if strength <= 0:
        raise SpecificationError("strength must be positive")
    positions = trajectory(motion, T)
    for p in positions:
        if not _in_bounds(motion, p, H, W):
            raise SpecificationError(f"trajectory leaves the frame at {tuple(p)}")
    _, noise_rng, fake_rng = _streams(seed)
    gains = np.ones(T)
    if kind == "position_jitter":
        offsets = fake_rng.standard_normal((T, 2)) * strength
        positions = np.array([_clamp_pos(motion, p + o, H, W) for p, o in zip(positions, offsets)])
    elif kind == "appearance_flicker":
        gains = 1.0 + fake_rng.standard_normal(T) * strength
    frames = _render(positions, gains, style, motion, C, H, W, noise_rng)
    if kind == "local_frame_swap":
        for _ in range(int(np.floor(strength))):
            i = int(fake_rng.integers(0, T - 1))
            frames[[i, i + 1]] = frames[[i + 1, i]]
    return Clip(frames, FAKE, video_id)


# ---------------------------------------------------------------- datasets

def sample_motion(rng, T, H, W):
    kind = OBJECTS[int(rng.integers(0, 2))]
    if kind == "rectangle":
        size = (float(rng.uniform(3.0, 5.0)), float(rng.uniform(3.0, 5.0)))
    else:
        s = float(rng.uniform(1.0, 1.5))
        size = (s, s)
    motion = MotionSpec(kind=kind, size=size)
    hx, hy = motion.half_extent()
    speed = float(rng.uniform(0.4, 1.0))
    angle = float(rng.uniform(0, 2 * np.pi))
    vx, vy = speed * np.cos(angle), speed * np.sin(angle)
    # shrink speed until the path fits
    while abs(vx) * (T - 1) > W - 2 * hx or abs(vy) * (T - 1) > H - 2 * hy:
        vx, vy = vx * 0.8, vy * 0.8
    xs = (hx - min(0.0, vx * (T - 1)), W - hx - max(0.0, vx * (T - 1)))
    ys = (hy - min(0.0, vy * (T - 1)), H - hy - max(0.0, vy * (T - 1)))
    pos = (float(rng.uniform(*xs)), float(rng.uniform(*ys)))
    return MotionSpec(kind=kind, position=pos, velocity=(vx, vy), size=size)


def clip_seed(dataset_seed, video_id):
    return int(np.random.SeedSequence([int(dataset_seed), int(video_id)]).generate_state(1)[0])


def gen_dataset(spec):
    """Generate every cell in order. Returns (clips, manifest rows)."""
    spec.validate()
    clips, manifest = [], []
    vid = spec.id_offset
    for cell in spec.cells:
        style = StyleSpec(cell.palette_id, spec.noise_floor)
        for _ in range(cell.count):
            seed = clip_seed(spec.seed, vid)
            motion = sample_motion(_streams(seed)[0], spec.T, spec.H, spec.W)
            dims = dict(T=spec.T, C=spec.C, H=spec.H, W=spec.W, video_id=vid)
            if cell.label == REAL:
                clip = gen_real_clip(seed, style, motion, **dims)
                kind, strength = "none", 0.0
            else:
                clip = gen_fake_clip(seed, style, motion, spec.kind, spec.strength, **dims)
                kind, strength = spec.kind, spec.strength
            clips.append(clip)
            manifest.append(dict(video_id=vid, label=cell.label, style=cell.palette_id,
                                 kind=kind, strength=strength, seed=seed))
            vid += 1
    return clips, manifest


def style_shift_specs(train_count=400, test_count=200, style_a=0, style_b=1, seed=0, **kw):
    """Train: real<->style_a, fake<->style_b. Test: the pairing is swapped."""
    train = DatasetSpec(cells=[Cell(REAL, style_a, train_count // 2), Cell(FAKE, style_b, train_count // 2)],
                        seed=seed, id_offset=0, **kw)
    test = DatasetSpec(cells=[Cell(REAL, style_b, test_count // 2), Cell(FAKE, style_a, test_count // 2)],
                       seed=seed + 1, id_offset=train_count, **kw)
    return {"train": train, "test": test}

"""On-disk formats: clip archive, manifest CSV, checkpoint, history CSV."""
import csv
import io
import struct
import zlib
from collections import OrderedDict

import numpy as np

from .clipgen import Clip

ARCHIVE_MAGIC = b"SDRC"
ARCHIVE_VERSION = 1
CHECKPOINT_MAGIC = b"SDR1"
CHECKPOINT_VERSION = 1

MANIFEST_HEADER = ["video_id", "label", "style", "kind", "strength", "seed"]
HISTORY_HEADER = ["record", "step", "epoch", "split", "l_mi", "l_con", "l_ce", "total", "kl_sum", "auc", "acc"]


class FormatError(ValueError):
    pass


def write_archive(path, clips):
    if not clips:
        raise FormatError("refusing to write an empty archive")
    T, C, H, W = clips[0].frames.shape
    with open(path, "wb") as fh:
        fh.write(ARCHIVE_MAGIC)
        fh.write(struct.pack("<H5I", ARCHIVE_VERSION, T, C, H, W, len(clips)))
        for clip in clips:
            if clip.frames.shape != (T, C, H, W):
                raise FormatError("all clips in an archive share T, C, H, W")
            fh.write(struct.pack("<IB", clip.video_id, clip.label))
            fh.write(np.ascontiguousarray(clip.frames, dtype="<f4").tobytes())


def read_archive(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != ARCHIVE_MAGIC:
        raise FormatError(f"{path}: not a clip archive")
    version, T, C, H, W, count = struct.unpack_from("<H5I", buf, 4)
    if version != ARCHIVE_VERSION:
        raise FormatError(f"{path}: unsupported archive version {version}")
    off = 4 + struct.calcsize("<H5I")
    n = T * C * H * W
    clips = []
    for _ in range(count):
        vid, label = struct.unpack_from("<IB", buf, off)
        off += 5
        frames = np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(T, C, H, W)
        off += 4 * n
        clips.append(Clip(frames.astype(np.float32), int(label), int(vid)))
    if off != len(buf):
        raise FormatError(f"{path}: trailing bytes in archive")
    return clips


def write_manifest(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=MANIFEST_HEADER, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "strength": repr(float(r["strength"]))})


def read_manifest(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["video_id"], r["label"], r["style"], r["seed"] = (int(r[k]) for k in ("video_id", "label", "style", "seed"))
        r["strength"] = float(r["strength"])
    return rows


def save_checkpoint(path, state):
    """``state`` maps name -> array; stored as f32 whatever the compute width."""
    body = io.BytesIO()
    body.write(CHECKPOINT_MAGIC)
    body.write(struct.pack("<HI", CHECKPOINT_VERSION, len(state)))
    for name, arr in state.items():
        raw = name.encode("utf-8")
        body.write(struct.pack("<H", len(raw)))
        body.write(raw)
        body.write(struct.pack("<B", arr.ndim))
        body.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        body.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    data = body.getvalue()
    with open(path, "wb") as fh:
        fh.write(data)
        fh.write(struct.pack("<I", zlib.crc32(data)))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    data, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint")
    if zlib.crc32(data) != crc:
        raise FormatError(f"{path}: CRC mismatch")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    off = 10
    state = OrderedDict()
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<B", data, off)
        off += 1
        dims = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        state[name] = np.frombuffer(data, dtype="<f4", count=size, offset=off).reshape(dims).copy()
        off += 4 * size
    return state


def _fmt(v):
    if v is None or v == "":
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for rec in history.rows():
            w.writerow([_fmt(rec.get(k)) for k in HISTORY_HEADER])

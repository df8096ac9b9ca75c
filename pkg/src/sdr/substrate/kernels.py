"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. ``SDR_PURE_PYTHON=1`` forces the fallback at import time, and
:func:`use_backend` switches at runtime (tests and benchmarks).
"""
import contextlib
import os

import numpy as np

from . import _kernels_py

try:
    if os.environ.get("SDR_PURE_PYTHON") == "1":
        raise ImportError("compiled kernels disabled by SDR_PURE_PYTHON")
    from . import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

HAVE_COMPILED = _kernels_c is not None
_active = _kernels_c if HAVE_COMPILED else _kernels_py


def backend():
    return "compiled" if _active is _kernels_c and HAVE_COMPILED else "python"


def set_backend(name):
    global _active
    if name == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernels are not built")
        _active = _kernels_c
    elif name == "python":
        _active = _kernels_py
    else:
        raise ValueError(f"unknown backend {name!r}")


@contextlib.contextmanager
def use_backend(name):
    prev = backend()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


# Temporal convolution is a windowed matmul; BLAS beats a loop kernel here,
# so both backends share the numpy route.
conv_forward = _kernels_py.conv_forward
conv_backward = _kernels_py.conv_backward


def layer_norm_forward(x, gain, bias, eps):
    """Normalize rows of a 2-D array. Returns (y, xhat, rstd)."""
    return _active.layer_norm_forward(np.ascontiguousarray(x), gain, bias, eps)


def layer_norm_backward(g, xhat, rstd, gain):
    return _active.layer_norm_backward(np.ascontiguousarray(g), xhat, rstd, gain)


def pool_exact(x, offsets):
    return _active.pool_exact(np.ascontiguousarray(x), np.asarray(offsets, dtype=np.int64))


conv_out_len = _kernels_py.conv_out_len

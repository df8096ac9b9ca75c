"""Dense tensors with tape-based reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array. Every primitive below records its
parents and a closure mapping the output gradient to parent gradients;
:meth:`Tensor.backward` walks the graph in reverse topological order.
Parameters are leaf tensors with ``requires_grad=True``; their gradients
accumulate in ``.grad``.
"""
import contextlib

import numpy as np

from . import kernels

_PRECISIONS = {"float32": np.float32, "float64": np.float64}
_dtype = np.float32


class NumericError(FloatingPointError):
    """A primitive produced NaN or Inf."""


class ShapeError(ValueError):
    """Operand shapes or configuration do not fit the primitive."""


def set_precision(name):
    global _dtype
    try:
        _dtype = _PRECISIONS[name]
    except KeyError:
        raise ValueError(f"precision must be one of {sorted(_PRECISIONS)}, got {name!r}") from None


def get_dtype():
    return _dtype


@contextlib.contextmanager
def precision(name):
    prev = np.dtype(_dtype).name
    set_precision(name)
    try:
        yield
    finally:
        set_precision(prev)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, _op="leaf"):
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        order = _topo(self)
        grads = {id(self): grad}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not _needs_grad(parent):
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _needs_grad(t):
    return t.requires_grad or t._backward is not None


def _topo(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and _needs_grad(p):
                stack.append((p, False))
    order.reverse()
    return order


def tensor(data, requires_grad=False):
    return Tensor(np.array(data, dtype=_dtype), requires_grad=requires_grad)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=_dtype))


def _result(data, parents, backward, op):
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite value produced by {op}")
    if not any(_needs_grad(p) for p in parents):
        return Tensor(data, _op=op)
    return Tensor(data, _parents=parents, _backward=backward, _op=op)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b):
    if not isinstance(b, Tensor) and np.isscalar(b):
        a, b = as_tensor(a), float(b)
        return _result(a.data * b, (a,), lambda g: (g * b,), "scale")
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                   "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bw(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return _result(out, (a, b), bw, "div")


def relu(x):
    mask = x.data > 0
    return _result(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def exp(x):
    out = np.exp(x.data)
    return _result(out, (x,), lambda g: (g * out,), "exp")


def log(x):
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def sqrt(x):
    out = np.sqrt(x.data)
    return _result(out, (x,), lambda g: (g * 0.5 / out,), "sqrt")


def clamp_min(x, lo):
    mask = x.data >= lo
    return _result(np.maximum(x.data, lo).astype(x.data.dtype, copy=False), (x,),
                   lambda g: (g * mask,), "clamp_min")


# ---------------------------------------------------------------- reductions

def canonical_sum(a, axis):
    """Sum along ``axis`` after sorting, so the result ignores input order."""
    return np.sort(a, axis=axis).sum(axis=axis)


def sum(x, axis=None, keepdims=False):
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.data.dtype),)

    return _result(np.asarray(out, dtype=x.data.dtype), (x,), bw, "sum")


def mean(x, axis=None, keepdims=False, canonical=False):
    """Mean; ``canonical=True`` makes it exactly permutation-invariant along ``axis``."""
    n = x.data.size if axis is None else x.shape[axis]
    if canonical:
        if axis is None:
            raise ShapeError("canonical mean needs an explicit axis")
        out = canonical_sum(x.data, axis) / n
        if keepdims:
            out = np.expand_dims(out, axis)
    else:
        out = np.mean(x.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, x.shape).astype(x.data.dtype),)

    return _result(np.asarray(out, dtype=x.data.dtype), (x,), bw, "mean")


# ---------------------------------------------------------------- shape ops

def reshape(x, shape):
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes):
    inv = np.argsort(axes)
    return _result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def broadcast_to(x, shape):
    return _result(np.broadcast_to(x.data, shape).copy(), (x,),
                   lambda g: (_unbroadcast(g, x.shape),), "broadcast_to")


def index(x, idx):
    out = x.data[idx]

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return _result(np.array(out), (x,), bw, "index")


def concat(parts, axis):
    parts = [as_tensor(p) for p in parts]
    sizes = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return _result(np.concatenate([p.data for p in parts], axis=axis), tuple(parts),
                   lambda g: tuple(np.split(g, sizes, axis=axis)), "concat")


# ---------------------------------------------------------------- linear maps

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(out, (a, b), bw, "matmul")


def affine(x, w, b=None):
    """``x @ w + b`` over the last axis of ``x``."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"affine: input width {x.shape[-1]} != weight rows {w.shape[0]}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(int(np.prod(lead)), w.shape[0])
    out = x2 @ w.data
    if b is not None:
        out = out + b.data
    out = out.reshape(*lead, w.shape[1])

    def bw(g):
        g2 = g.reshape(x2.shape[0], w.shape[1])
        gx = (g2 @ w.data.T).reshape(x.shape)
        gw = x2.T @ g2
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return _result(out, parents, bw, "affine")


def weighted_sum(a, v):
    """``out[..., q, :] = sum_k a[..., q, k] * v[..., k, :]``, exactly invariant to key order."""
    a, v = as_tensor(a), as_tensor(v)
    terms = a.data[..., :, :, None] * v.data[..., None, :, :]
    out = canonical_sum(terms, axis=-2)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(v.data, -1, -2))
        gv = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gv, v.shape)

    return _result(out, (a, v), bw, "weighted_sum")


# ---------------------------------------------------------------- normalization

def _check_finite(x, op):
    if not np.all(np.isfinite(x.data)):
        raise NumericError(f"non-finite input to {op}")


def softmax(x, axis=-1):
    _check_finite(x, "softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / np.expand_dims(canonical_sum(e, axis), axis)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (x,), bw, "softmax")


def log_softmax(x, axis=-1):
    _check_finite(x, "log_softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.expand_dims(canonical_sum(np.exp(z), axis), axis))
    out = z - lse

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _result(out, (x,), bw, "log_softmax")


LN_EPS = 1e-5


def layer_norm(x, gain, bias):
    """Per-row normalization over the last (channel) axis."""
    d = x.shape[-1]
    y, xhat, rstd = kernels.layer_norm_forward(x.data.reshape(-1, d), gain.data, bias.data, LN_EPS)

    def bw(g):
        gx, gg, gb = kernels.layer_norm_backward(g.reshape(-1, d), xhat, rstd, gain.data)
        return gx.reshape(x.shape), gg, gb

    return _result(y.reshape(x.shape), (x, gain, bias), bw, "layer_norm")


# ---------------------------------------------------------------- video primitives

def conv_padding(kt, stride):
    if kt % 2 == 0:
        if stride == 1:
            raise ShapeError(f"even temporal kernel {kt} with stride 1 has ambiguous padding")
        return 0
    return (kt - 1) // 2


def temporal_conv(x, kernel, bias, stride=1):
    """1-D convolution along time, applied independently to every site.

    ``x`` is [N, T, D_in] (N sites), ``kernel`` [Kt, D_in, D_out]. Zero padding
    of (Kt-1)/2 on both ends for odd Kt.
    """
    x = as_tensor(x)
    if x.ndim == 2:
        return reshape(temporal_conv(reshape(x, (1,) + x.shape), kernel, bias, stride),
                       _conv_shape_2d(x.shape, kernel.shape, stride))
    kt, di, do = kernel.shape
    if x.shape[-1] != di or bias.shape != (do,):
        raise ShapeError(f"temporal_conv: input {x.shape}, kernel {kernel.shape}, bias {bias.shape}")
    if stride < 1:
        raise ShapeError("stride must be positive")
    pad = conv_padding(kt, stride)
    if x.shape[1] < kt:
        raise ShapeError(f"sequence of length {x.shape[1]} is shorter than kernel {kt}")
    out = kernels.conv_forward(x.data, kernel.data, bias.data, stride, pad)

    def bw(g):
        return kernels.conv_backward(g, x.data, kernel.data, stride, pad)

    return _result(out, (x, kernel, bias), bw, "temporal_conv")


def _conv_shape_2d(xshape, kshape, stride):
    pad = conv_padding(kshape[0], stride)
    return (kernels.conv_out_len(xshape[0], kshape[0], stride, pad), kshape[2])


def pool_sites(x, offsets):
    """Mean over each clip's sites: [N, T, D] -> [B, T, D].

    Exact fixed-point accumulation, so the result is bit-identical under any
    reordering of sites within a clip.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    counts = np.diff(offsets)
    if offsets[0] != 0 or offsets[-1] != x.shape[0] or np.any(counts <= 0):
        raise ShapeError("pool_sites: every clip needs at least one site")
    out = kernels.pool_exact(x.data, offsets)

    def bw(g):
        return (np.repeat(g / counts[:, None, None].astype(g.dtype), counts, axis=0),)

    return _result(out, (x,), bw, "pool_sites")


def neighborhood3x3(x, batch, height, width):
    """Gather each site's 3x3 spatial neighbourhood (zero padded) into channels.

    ``x`` is [B*H*W, T, D] in row-major site order; output is [B*H*W, T, 9*D].
    Only the spatially-mixing baseline uses this.
    """
    n, T, d = x.shape
    if n != batch * height * width:
        raise ShapeError("neighborhood3x3: site count does not match grid")
    grid = x.data.reshape(batch, height, width, T, d)
    padded = np.zeros((batch, height + 2, width + 2, T, d), dtype=x.data.dtype)
    padded[:, 1:-1, 1:-1] = grid
    cols = [padded[:, dy:dy + height, dx:dx + width] for dy in range(3) for dx in range(3)]
    out = np.concatenate(cols, axis=-1).reshape(n, T, 9 * d)

    def bw(g):
        g5 = g.reshape(batch, height, width, T, 9, d)
        gp = np.zeros_like(padded)
        for j in range(9):
            dy, dx = divmod(j, 3)
            gp[:, dy:dy + height, dx:dx + width] += g5[..., j, :]
        return (gp[:, 1:-1, 1:-1].reshape(n, T, d),)

    return _result(out, (x,), bw, "neighborhood3x3")


def attention(q, k, v):
    """Scaled dot-product attention over the last two axes.

    Returns (output, weights); rows of ``weights`` sum to one.
    """
    axes = tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)
    scores = mul(matmul(q, transpose(k, axes)), 1.0 / np.sqrt(q.shape[-1]))
    weights = softmax(scores, axis=-1)
    return weighted_sum(weights, v), weights

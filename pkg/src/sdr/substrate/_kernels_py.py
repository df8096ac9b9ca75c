"""Pure-numpy implementations of the hot kernels.

Every function here has a compiled twin in ``_kernels.pyx`` with the same
signature. The exact spatial pool must agree bit-for-bit between the two.
"""
import numpy as np

# Fixed-point grid for the exact pool: values are quantized to
# max|x| * 2**-POOL_BITS, so up to 2**(62 - POOL_BITS) sites fit in int64.
POOL_BITS = 46


def conv_out_len(T, kt, stride, pad):
    return (T + 2 * pad - kt) // stride + 1


def _windows(x, kt, stride, pad):
    n, T, d = x.shape
    t_out = conv_out_len(T, kt, stride, pad)
    if pad:
        xp = np.zeros((n, T + 2 * pad, d), dtype=x.dtype)
        xp[:, pad:pad + T] = x
    else:
        xp = x
    cols = [xp[:, k:k + stride * (t_out - 1) + 1:stride] for k in range(kt)]
    return np.concatenate(cols, axis=2), t_out


def conv_forward(x, w, b, stride, pad):
    kt, di, do = w.shape
    win, t_out = _windows(x, kt, stride, pad)
    n = x.shape[0]
    out = win.reshape(n * t_out, kt * di) @ w.reshape(kt * di, do)
    out += b
    return out.reshape(n, t_out, do)


def _valid(T, t_out, k, stride, pad):
    """Output steps t whose tap k lands inside [0, T), and the first input index."""
    lo = max(0, -((k - pad) // stride)) if k < pad else 0
    hi = min(t_out, (T - 1 - k + pad) // stride + 1)
    return lo, hi, lo * stride + k - pad


def conv_backward(g, x, w, stride, pad):
    kt, di, do = w.shape
    n, T, _ = x.shape
    t_out = g.shape[1]
    g2 = g.reshape(n * t_out, do)
    # one matmul for all taps, then scatter each tap back to its input step
    gtap = (g2 @ w.transpose(2, 0, 1).reshape(do, kt * di)).reshape(n, t_out, kt, di)
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    for k in range(kt):
        lo, hi, a = _valid(T, t_out, k, stride, pad)
        if hi <= lo:
            continue
        src = slice(a, a + stride * (hi - lo - 1) + 1, stride)
        gx[:, src] += gtap[:, lo:hi, k]
        gw[k] = x[:, src].reshape(-1, di).T @ g[:, lo:hi].reshape(-1, do)
    return gx, gw, g2.sum(axis=0)


def pool_exact(x, offsets):
    """Per-segment mean over axis 0, independent of site order.

    ``offsets`` has length B+1; segment b spans rows offsets[b]:offsets[b+1].
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    starts = offsets[:-1]
    counts = np.diff(offsets)
    x64 = x.astype(np.float64, copy=False)
    amax = np.maximum.reduceat(np.abs(x64), starts, axis=0)
    _, e = np.frexp(amax)
    shift = (POOL_BITS - e).astype(np.int64)
    q = np.rint(np.ldexp(x64, np.repeat(shift, counts, axis=0))).astype(np.int64)
    total = np.add.reduceat(q, starts, axis=0)
    out = np.ldexp(total.astype(np.float64), -shift) / counts[:, None, None]
    return out.astype(x.dtype, copy=False)


def layer_norm_forward(x, gain, bias, eps):
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    rstd = (1.0 / np.sqrt(var + eps)).astype(x.dtype, copy=False)
    xhat = xc * rstd
    return xhat * gain + bias, xhat, rstd[:, 0]


def layer_norm_backward(g, xhat, rstd, gain):
    gh = g * gain
    s1 = gh.mean(axis=1, keepdims=True)
    s2 = (gh * xhat).mean(axis=1, keepdims=True)
    gx = rstd[:, None] * (gh - s1 - xhat * s2)
    return gx, (g * xhat).sum(axis=0), g.sum(axis=0)

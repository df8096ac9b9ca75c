# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels; see _kernels_py for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport frexp, ldexp, nearbyint, fabs, sqrt
from libc.stdint cimport int64_t

cnp.import_array()

ctypedef fused real:
    float
    double

DEF POOL_BITS = 46


def layer_norm_forward(real[:, ::1] x, real[::1] gain, real[::1] bias, double eps):
    cdef Py_ssize_t m = x.shape[0], d = x.shape[1], r, c
    dtype = np.float32 if real is float else np.float64
    y_arr = np.empty((m, d), dtype=dtype)
    xhat_arr = np.empty((m, d), dtype=dtype)
    rstd_arr = np.empty(m, dtype=dtype)
    cdef real[:, ::1] y = y_arr
    cdef real[:, ::1] xhat = xhat_arr
    cdef real[::1] rstd = rstd_arr
    cdef real mu, var, diff, rs
    with nogil:
        for r in range(m):
            mu = 0
            for c in range(d):
                mu = mu + x[r, c]
            mu = mu / d
            var = 0
            for c in range(d):
                diff = x[r, c] - mu
                var = var + diff * diff
            var = var / d
            rs = <real>(1.0 / sqrt(var + eps))
            rstd[r] = rs
            for c in range(d):
                xhat[r, c] = (x[r, c] - mu) * rs
                y[r, c] = xhat[r, c] * gain[c] + bias[c]
    return y_arr, xhat_arr, rstd_arr


def layer_norm_backward(real[:, ::1] g, real[:, ::1] xhat, real[::1] rstd, real[::1] gain):
    cdef Py_ssize_t m = g.shape[0], d = g.shape[1], r, c
    dtype = np.float32 if real is float else np.float64
    gx_arr = np.empty((m, d), dtype=dtype)
    gg_arr = np.zeros(d, dtype=dtype)
    gb_arr = np.zeros(d, dtype=dtype)
    cdef real[:, ::1] gx = gx_arr
    cdef real[::1] gg = gg_arr
    cdef real[::1] gb = gb_arr
    cdef real s1, s2, gh
    with nogil:
        for r in range(m):
            s1 = 0
            s2 = 0
            for c in range(d):
                gh = g[r, c] * gain[c]
                s1 = s1 + gh
                s2 = s2 + gh * xhat[r, c]
                gg[c] += g[r, c] * xhat[r, c]
                gb[c] += g[r, c]
            s1 = s1 / d
            s2 = s2 / d
            for c in range(d):
                gx[r, c] = rstd[r] * (g[r, c] * gain[c] - s1 - xhat[r, c] * s2)
    return gx_arr, gg_arr, gb_arr


def pool_exact(real[:, :, ::1] x, offsets):
    cdef int64_t[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t nseg = off.shape[0] - 1, T = x.shape[1], d = x.shape[2]
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((nseg, T, d), dtype=dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, s, t, c, cnt
    cdef double amax, v
    cdef int e, shift
    cdef int64_t total
    with nogil:
        for b in range(nseg):
            cnt = off[b + 1] - off[b]
            for t in range(T):
                for c in range(d):
                    amax = 0.0
                    for s in range(off[b], off[b + 1]):
                        v = fabs(<double>x[s, t, c])
                        if v > amax:
                            amax = v
                    frexp(amax, &e)
                    shift = POOL_BITS - e
                    total = 0
                    for s in range(off[b], off[b + 1]):
                        total += <int64_t>nearbyint(ldexp(<double>x[s, t, c], shift))
                    out[b, t, c] = <real>(ldexp(<double>total, -shift) / <double>cnt)
    return out_arr

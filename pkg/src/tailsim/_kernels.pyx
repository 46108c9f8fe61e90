# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-round kernels: coordinate-wise biclip and the clipped
local-epoch recursions.  Call-compatible with `tailsim._kernels_py`.

Clip codes: 0 none, 2 coordinate-wise biclip, 3 L2-wise biclip.  The epoch
kernels accumulate the displacement from zero (acc -= eta*clip) and evaluate
gradients at x0 + acc; see the pure module for the rationale.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, isfinite, sqrt

cnp.import_array()

CLIP_NONE = 0
CLIP_CW = 2
CLIP_L2 = 3


cdef inline double _sgn(double v) nogil:
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


cdef inline void _clip_into(double* g, double* out, Py_ssize_t m,
                            double u, double d, int code) nogil:
    cdef Py_ssize_t j
    cdef double a, n, scale
    if code == 0:
        for j in range(m):
            out[j] = g[j]
        return
    if code == 2:
        for j in range(m):
            a = g[j] if g[j] >= 0.0 else -g[j]
            if a <= d:
                out[j] = _sgn(g[j]) * d
            elif a >= u:
                out[j] = _sgn(g[j]) * u
            else:
                out[j] = g[j]
        return
    # code 3: L2-wise
    n = 0.0
    for j in range(m):
        n += g[j] * g[j]
    n = sqrt(n)
    if not isfinite(n):
        scale = 1.0  # divergence propagates
    elif n == 0.0:
        scale = 0.0
    elif n <= d:
        scale = d / n
    elif n >= u:
        scale = u / n
    else:
        scale = 1.0
    for j in range(m):
        out[j] = g[j] * scale


def biclip_cw(double[::1] x, double u, double d):
    """Coordinate-wise biclip: magnitudes pushed into [d, u], sign kept."""
    cdef Py_ssize_t m = x.shape[0]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    if m > 0:
        with nogil:
            _clip_into(&x[0], &out[0], m, u, d, 2)
    return out_arr


def epoch_label(double[:, ::1] X, double[::1] y, double[::1] x0,
                long long[:, ::1] idx, double eta, double u, double d, int code):
    """Clipped minibatch epoch on (X, y); idx is (z, b) row indices per step."""
    cdef Py_ssize_t z = idx.shape[0]
    cdef Py_ssize_t b = idx.shape[1]
    cdef Py_ssize_t m = x0.shape[0]
    acc_arr = np.zeros(m, dtype=np.float64)
    g_arr = np.empty(m, dtype=np.float64)
    c_arr = np.empty(m, dtype=np.float64)
    x_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] acc = acc_arr
    cdef double[::1] g = g_arr
    cdef double[::1] c = c_arr
    cdef double[::1] xcur = x_arr
    cdef Py_ssize_t k, i, j, row
    cdef double dot, resid, inv_b
    if m == 0:
        return acc_arr
    inv_b = 1.0 / b
    with nogil:
        for j in range(m):
            xcur[j] = x0[j]
        for k in range(z):
            for j in range(m):
                g[j] = 0.0
            for i in range(b):
                row = <Py_ssize_t> idx[k, i]
                dot = 0.0
                for j in range(m):
                    dot += X[row, j] * xcur[j]
                resid = dot - y[row]
                for j in range(m):
                    g[j] += X[row, j] * resid
            for j in range(m):
                g[j] *= inv_b
            _clip_into(&g[0], &c[0], m, u, d, code)
            for j in range(m):
                acc[j] -= eta * c[j]
                xcur[j] = x0[j] + acc[j]
    return acc_arr


def epoch_additive(double[:, ::1] A, double[::1] b, double[::1] x0,
                   double[:, ::1] noise, double eta, double u, double d, int code):
    """Clipped exact-gradient-plus-noise epoch; gradient is A x - b."""
    cdef Py_ssize_t z = noise.shape[0]
    cdef Py_ssize_t m = x0.shape[0]
    acc_arr = np.zeros(m, dtype=np.float64)
    g_arr = np.empty(m, dtype=np.float64)
    c_arr = np.empty(m, dtype=np.float64)
    x_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] acc = acc_arr
    cdef double[::1] g = g_arr
    cdef double[::1] c = c_arr
    cdef double[::1] xcur = x_arr
    cdef Py_ssize_t k, i, j
    cdef double dot
    if m == 0:
        return acc_arr
    with nogil:
        for j in range(m):
            xcur[j] = x0[j]
        for k in range(z):
            for i in range(m):
                dot = 0.0
                for j in range(m):
                    dot += A[i, j] * xcur[j]
                g[i] = dot - b[i] + noise[k, i]
            _clip_into(&g[0], &c[0], m, u, d, code)
            for j in range(m):
                acc[j] -= eta * c[j]
                xcur[j] = x0[j] + acc[j]
    return acc_arr

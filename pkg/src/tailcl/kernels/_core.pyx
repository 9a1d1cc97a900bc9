# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense kernels: the hot inner loops of the model.

Same API as ``tailcl.kernels._numpy``.  Loops are written out explicitly so
the summation order is fixed and no BLAS threading is involved.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt

cnp.import_array()


def affine_fwd(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    cdef Py_ssize_t n_rows = x.shape[0], n_in = x.shape[1], n_out = w.shape[0]
    out = np.empty((n_rows, n_out), dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef Py_ssize_t n, o, i
    cdef double acc
    for n in range(n_rows):
        for o in range(n_out):
            acc = b[o]
            for i in range(n_in):
                acc += x[n, i] * w[o, i]
            y[n, o] = acc
    return out


def affine_bwd(double[:, ::1] dy, double[:, ::1] x, double[:, ::1] w):
    cdef Py_ssize_t n_rows = x.shape[0], n_in = x.shape[1], n_out = w.shape[0]
    dx_arr = np.zeros((n_rows, n_in), dtype=np.float64)
    dw_arr = np.zeros((n_out, n_in), dtype=np.float64)
    db_arr = np.zeros(n_out, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double[:, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef Py_ssize_t n, o, i
    cdef double g
    for n in range(n_rows):
        for o in range(n_out):
            g = dy[n, o]
            db[o] += g
            for i in range(n_in):
                dx[n, i] += g * w[o, i]
                dw[o, i] += g * x[n, i]
    return dx_arr, dw_arr, db_arr


def relu_fwd(double[:, ::1] z):
    cdef Py_ssize_t n_rows = z.shape[0], n_cols = z.shape[1]
    out = np.empty((n_rows, n_cols), dtype=np.float64)
    cdef double[:, ::1] a = out
    cdef Py_ssize_t n, j
    for n in range(n_rows):
        for j in range(n_cols):
            a[n, j] = z[n, j] if z[n, j] > 0.0 else 0.0
    return out


def relu_bwd(double[:, ::1] da, double[:, ::1] z):
    cdef Py_ssize_t n_rows = z.shape[0], n_cols = z.shape[1]
    out = np.empty((n_rows, n_cols), dtype=np.float64)
    cdef double[:, ::1] dz = out
    cdef Py_ssize_t n, j
    for n in range(n_rows):
        for j in range(n_cols):
            dz[n, j] = da[n, j] if z[n, j] > 0.0 else 0.0
    return out


def scale_cols(double[:, ::1] x, double[::1] m, double factor):
    cdef Py_ssize_t n_rows = x.shape[0], n_cols = x.shape[1]
    out = np.empty((n_rows, n_cols), dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef Py_ssize_t n, j
    for n in range(n_rows):
        for j in range(n_cols):
            y[n, j] = x[n, j] * (m[j] * factor)
    return out


def row_softmax(double[:, ::1] z, double tau):
    cdef Py_ssize_t n_rows = z.shape[0], n_cols = z.shape[1]
    out = np.empty((n_rows, n_cols), dtype=np.float64)
    cdef double[:, ::1] p = out
    cdef Py_ssize_t n, j
    cdef double mx, s, v
    for n in range(n_rows):
        mx = z[n, 0] / tau
        for j in range(1, n_cols):
            v = z[n, j] / tau
            if v > mx:
                mx = v
        s = 0.0
        for j in range(n_cols):
            v = exp(z[n, j] / tau - mx)
            p[n, j] = v
            s += v
        for j in range(n_cols):
            p[n, j] /= s
    return out


def row_logsumexp(double[:, ::1] z, double tau):
    cdef Py_ssize_t n_rows = z.shape[0], n_cols = z.shape[1]
    out = np.empty(n_rows, dtype=np.float64)
    cdef double[::1] l = out
    cdef Py_ssize_t n, j
    cdef double mx, s, v
    for n in range(n_rows):
        mx = z[n, 0] / tau
        for j in range(1, n_cols):
            v = z[n, j] / tau
            if v > mx:
                mx = v
        s = 0.0
        for j in range(n_cols):
            s += exp(z[n, j] / tau - mx)
        l[n] = mx + log(s)
    return out


def normalize_rows(double[:, ::1] x):
    cdef Py_ssize_t n_rows = x.shape[0], n_cols = x.shape[1]
    out = np.empty((n_rows, n_cols), dtype=np.float64)
    norms_arr = np.empty(n_rows, dtype=np.float64)
    cdef double[:, ::1] xn = out
    cdef double[::1] norms = norms_arr
    cdef Py_ssize_t n, j
    cdef double s, d
    for n in range(n_rows):
        s = 0.0
        for j in range(n_cols):
            s += x[n, j] * x[n, j]
        s = sqrt(s)
        norms[n] = s
        d = s if s > 0.0 else 1.0
        for j in range(n_cols):
            xn[n, j] = x[n, j] / d
    return out, norms_arr


def normalize_rows_bwd(double[:, ::1] g, double[:, ::1] xn, double[::1] norms):
    cdef Py_ssize_t n_rows = g.shape[0], n_cols = g.shape[1]
    out = np.empty((n_rows, n_cols), dtype=np.float64)
    cdef double[:, ::1] dx = out
    cdef Py_ssize_t n, j
    cdef double dot, d
    for n in range(n_rows):
        dot = 0.0
        for j in range(n_cols):
            dot += g[n, j] * xn[n, j]
        d = norms[n] if norms[n] > 0.0 else 1.0
        for j in range(n_cols):
            dx[n, j] = (g[n, j] - dot * xn[n, j]) / d
    return out

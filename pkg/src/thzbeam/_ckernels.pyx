# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled counterparts of the convolution and pooling kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef void _im2col(const double[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw,
                  double[:, ::1] col) noexcept nogil:
    # col row = (s, r, q); col column = (i, j, c)
    cdef Py_ssize_t n = x.shape[0], ci = x.shape[3]
    cdef Py_ssize_t ho = x.shape[1] - kh + 1, wo = x.shape[2] - kw + 1
    cdef Py_ssize_t s, r, q, i, j, c, row, colidx
    for s in range(n):
        for r in range(ho):
            for q in range(wo):
                row = (s * ho + r) * wo + q
                colidx = 0
                for i in range(kh):
                    for j in range(kw):
                        for c in range(ci):
                            col[row, colidx] = x[s, r + i, q + j, c]
                            colidx = colidx + 1


def conv2d_forward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] w, const double[::1] b):
    """im2col + one GEMM."""
    cdef Py_ssize_t n = x.shape[0], ci = x.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], co = w.shape[3]
    cdef Py_ssize_t ho = x.shape[1] - kh + 1, wo = x.shape[2] - kw + 1
    col_arr = np.empty((n * ho * wo, kh * kw * ci))
    cdef double[:, ::1] col = col_arr
    with nogil:
        _im2col(x, kh, kw, col)
    out = col_arr @ np.asarray(w).reshape(kh * kw * ci, co)
    out += np.asarray(b)
    return out.reshape(n, ho, wo, co)


def conv2d_backward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] w,
                    const double[:, :, :, ::1] g):
    cdef Py_ssize_t n = x.shape[0], ci = x.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], co = w.shape[3]
    cdef Py_ssize_t ho = g.shape[1], wo = g.shape[2]
    col_arr = np.empty((n * ho * wo, kh * kw * ci))
    cdef double[:, ::1] col = col_arr
    with nogil:
        _im2col(x, kh, kw, col)
    g2 = np.asarray(g).reshape(n * ho * wo, co)
    dw_arr = (col_arr.T @ g2).reshape(kh, kw, ci, co)
    db_arr = g2.sum(axis=0)
    dcol_arr = np.ascontiguousarray(g2 @ np.asarray(w).reshape(kh * kw * ci, co).T)
    cdef const double[:, ::1] dcol = dcol_arr
    dx_arr = np.zeros((n, x.shape[1], x.shape[2], ci))
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t s, r, q, i, j, c, row, colidx
    with nogil:
        for s in range(n):
            for r in range(ho):
                for q in range(wo):
                    row = (s * ho + r) * wo + q
                    colidx = 0
                    for i in range(kh):
                        for j in range(kw):
                            for c in range(ci):
                                dx[s, r + i, q + j, c] += dcol[row, colidx]
                                colidx = colidx + 1
    return dx_arr, dw_arr, db_arr


def maxpool2d_forward(const double[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[3]
    cdef Py_ssize_t ho = x.shape[1] // kh, wo = x.shape[2] // kw
    out_arr = np.empty((n, ho, wo, c))
    idx_arr = np.empty((n, ho, wo, c), dtype=np.intp)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t s, r, q, ch, i, j, best
    cdef double v, m
    with nogil:
        for s in range(n):
            for r in range(ho):
                for q in range(wo):
                    for ch in range(c):
                        m = x[s, r * kh, q * kw, ch]
                        best = 0
                        for i in range(kh):
                            for j in range(kw):
                                v = x[s, r * kh + i, q * kw + j, ch]
                                if v > m:
                                    m = v
                                    best = i * kw + j
                        out[s, r, q, ch] = m
                        idx[s, r, q, ch] = best
    return out_arr, idx_arr


def maxpool2d_backward(const double[:, :, :, ::1] g, const Py_ssize_t[:, :, :, ::1] idx,
                       Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t n = g.shape[0], ho = g.shape[1], wo = g.shape[2], c = g.shape[3]
    dx_arr = np.zeros((n, ho * kh, wo * kw, c))
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t s, r, q, ch, k
    with nogil:
        for s in range(n):
            for r in range(ho):
                for q in range(wo):
                    for ch in range(c):
                        k = idx[s, r, q, ch]
                        dx[s, r * kh + k // kw, q * kw + k % kw, ch] = g[s, r, q, ch]
    return dx_arr

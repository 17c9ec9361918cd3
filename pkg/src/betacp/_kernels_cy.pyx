# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-entry accumulation kernels (the trainer's hot loops).

Accumulation order matches betacp._kernels_py: per target bin,
contributions are added in entry order.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t idx_t


def predict_entries(const double[:, ::1] U, const double[:, ::1] S,
                    const double[:, ::1] T,
                    const double[::1] a, const double[::1] b, const double[::1] c,
                    const idx_t[::1] ii, const idx_t[::1] jj, const idx_t[::1] kk,
                    out=None):
    """Reconstruction at the observed triples: sum_r U*S*T plus the biases."""
    cdef Py_ssize_t n = ii.shape[0]
    cdef Py_ssize_t rank = U.shape[1]
    if out is None:
        out = np.empty(n)
    cdef double[::1] o = out
    cdef Py_ssize_t e, r, i, j, k
    cdef double acc
    for e in range(n):
        i = ii[e]
        j = jj[e]
        k = kk[e]
        acc = a[i] + b[j] + c[k]
        for r in range(rank):
            acc += U[i, r] * S[j, r] * T[k, r]
        o[e] = acc
    return out


def mode_update_terms(const idx_t[::1] lead, Py_ssize_t n_lead,
                      const double[:, ::1] F1, const idx_t[::1] idx1,
                      const double[:, ::1] F2, const idx_t[::1] idx2,
                      const double[::1] wnum, const double[::1] wden):
    """Per-row numerator/denominator sums for one factor-matrix update."""
    cdef Py_ssize_t n = lead.shape[0]
    cdef Py_ssize_t rank = F1.shape[1]
    num = np.zeros((n_lead, rank))
    den = np.zeros((n_lead, rank))
    cdef double[:, ::1] num_v = num
    cdef double[:, ::1] den_v = den
    cdef Py_ssize_t e, r, l, p, q
    cdef double w
    for e in range(n):
        l = lead[e]
        p = idx1[e]
        q = idx2[e]
        for r in range(rank):
            w = F1[p, r] * F2[q, r]
            num_v[l, r] += w * wnum[e]
            den_v[l, r] += w * wden[e]
    return num, den


def bias_update_terms(const idx_t[::1] lead, Py_ssize_t n_lead,
                      const double[::1] wnum, const double[::1] wden):
    """Per-row numerator/denominator sums for one bias-vector update."""
    num = np.zeros(n_lead)
    den = np.zeros(n_lead)
    cdef double[::1] num_v = num
    cdef double[::1] den_v = den
    cdef Py_ssize_t e, l
    cdef Py_ssize_t n = lead.shape[0]
    for e in range(n):
        l = lead[e]
        num_v[l] += wnum[e]
        den_v[l] += wden[e]
    return num, den

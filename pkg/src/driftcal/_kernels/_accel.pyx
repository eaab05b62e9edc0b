# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twin of the numpy loss kernels (see _numpy_impl.py for the contract)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def brier_loss_dtemp(cnp.ndarray[cnp.float64_t, ndim=2] logits,
                     cnp.ndarray[cnp.int64_t, ndim=1] labels,
                     cnp.ndarray[cnp.float64_t, ndim=1] temps):
    cdef Py_ssize_t n = logits.shape[0]
    cdef Py_ssize_t k = logits.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dldt = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p = np.empty(k, dtype=np.float64)
    cdef double loss = 0.0
    cdef double t, umax, esum, s, r, gt, u
    cdef Py_ssize_t i, j, y

    for i in range(n):
        t = temps[i]
        y = labels[i]
        umax = logits[i, 0] / t
        for j in range(1, k):
            u = logits[i, j] / t
            if u > umax:
                umax = u
        esum = 0.0
        for j in range(k):
            p[j] = exp(logits[i, j] / t - umax)
            esum += p[j]
        s = 0.0
        for j in range(k):
            p[j] /= esum
            r = (1.0 if j == y else 0.0) - p[j]
            loss += r * r
            s += r * p[j]
        gt = 0.0
        # dL/dT_i = sum_k 2 p_k (r_k - s) z_k / T^2
        for j in range(k):
            r = (1.0 if j == y else 0.0) - p[j]
            gt += 2.0 * p[j] * (r - s) * logits[i, j]
        dldt[i] = gt / (t * t)
    return loss, dldt


def nll_loss_dtemp(cnp.ndarray[cnp.float64_t, ndim=2] logits,
                   cnp.ndarray[cnp.int64_t, ndim=1] labels,
                   cnp.ndarray[cnp.float64_t, ndim=1] temps):
    cdef Py_ssize_t n = logits.shape[0]
    cdef Py_ssize_t k = logits.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dldt = np.empty(n, dtype=np.float64)
    cdef double loss = 0.0
    cdef double t, umax, esum, pz, u, pj
    cdef Py_ssize_t i, j, y

    for i in range(n):
        t = temps[i]
        y = labels[i]
        umax = logits[i, 0] / t
        for j in range(1, k):
            u = logits[i, j] / t
            if u > umax:
                umax = u
        esum = 0.0
        for j in range(k):
            esum += exp(logits[i, j] / t - umax)
        loss += umax + log(esum) - logits[i, y] / t
        pz = 0.0
        for j in range(k):
            pj = exp(logits[i, j] / t - umax) / esum
            pz += pj * logits[i, j]
        dldt[i] = (logits[i, y] - pz) / (t * t)
    return loss, dldt

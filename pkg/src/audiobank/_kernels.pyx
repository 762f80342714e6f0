# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures mirror :mod:`audiobank._kernels_py`."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def correlate_valid(const double[:, :, ::1] signal, const double[:, :, ::1] kernel):
    """Valid-mode 2-D cross-correlation summed over the leading (bin) axis."""
    cdef Py_ssize_t B = signal.shape[0]
    cdef Py_ssize_t K = signal.shape[1], T = signal.shape[2]
    cdef Py_ssize_t Kd = kernel.shape[1], Td = kernel.shape[2]
    if kernel.shape[0] != B:
        raise ValueError("bin count mismatch")
    if Kd > K or Td > T:
        raise ValueError("kernel larger than signal")
    cdef Py_ssize_t P = K - Kd + 1, Q = T - Td + 1
    out_arr = np.zeros((P, Q), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t b, p, q, i, j
    cdef double w
    # one kernel tap at a time, so the innermost loop runs along contiguous rows
    for b in range(B):
        for i in range(Kd):
            for j in range(Td):
                w = kernel[b, i, j]
                for p in range(P):
                    for q in range(Q):
                        out[p, q] += w * signal[b, p + i, q + j]
    return out_arr


def smo_solve(const double[:, ::1] gram, const double[::1] y, double C, double tol,
              long max_iter, const cnp.intp_t[::1] order):
    """Two-variable SMO with maximal-violating-pair selection.

    Returns ``(alpha, b, n_iter, gap)``.
    """
    cdef Py_ssize_t n = gram.shape[0]
    cdef Py_ssize_t t, k, i, j
    alpha_arr = np.zeros(n, dtype=np.float64)
    err_arr = -np.asarray(y, dtype=np.float64).copy()
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] err = err_arr
    cdef double lo, hi, e, eta, a1, a2, a2new, a1new, d1, d2, L, H, gap = 0.0
    cdef long it = 0
    cdef double tau = 1e-12
    cdef double snap = 1e-12 * C
    while it < max_iter:
        i = -1
        j = -1
        lo = 0.0
        hi = 0.0
        for k in range(n):
            t = order[k]
            e = err[t]
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if i < 0 or e < lo:
                    lo = e
                    i = t
            if (y[t] < 0 and alpha[t] < C) or (y[t] > 0 and alpha[t] > 0):
                if j < 0 or e > hi:
                    hi = e
                    j = t
        if i < 0 or j < 0:
            gap = 0.0
            break
        gap = hi - lo
        if gap < tol:
            break
        a1 = alpha[i]
        a2 = alpha[j]
        if y[i] != y[j]:
            L = max(0.0, a2 - a1)
            H = min(C, C + a2 - a1)
        else:
            L = max(0.0, a1 + a2 - C)
            H = min(C, a1 + a2)
        eta = gram[i, i] + gram[j, j] - 2.0 * gram[i, j]
        if eta <= tau:
            eta = tau
        a2new = a2 + y[j] * (err[i] - err[j]) / eta
        if a2new < L:
            a2new = L
        elif a2new > H:
            a2new = H
        a1new = a1 + y[i] * y[j] * (a2 - a2new)
        # snap round-off residue onto the box so bound points leave the working set
        if a1new < snap:
            a1new = 0.0
        elif a1new > C - snap:
            a1new = C
        if a2new < snap:
            a2new = 0.0
        elif a2new > C - snap:
            a2new = C
        alpha[i] = a1new
        alpha[j] = a2new
        d1 = (a1new - a1) * y[i]
        d2 = (a2new - a2) * y[j]
        for t in range(n):
            err[t] = err[t] + d1 * gram[t, i] + d2 * gram[t, j]
        it += 1

    cdef double bsum = 0.0
    cdef Py_ssize_t nfree = 0
    for t in range(n):
        if 0.0 < alpha[t] < C:
            bsum = bsum - err[t]
            nfree += 1
    if nfree > 0:
        b = bsum / nfree
    else:
        b = -(lo + hi) / 2.0
    return alpha_arr, b, it, gap

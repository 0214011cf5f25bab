# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loop: log-domain alternating marginal scaling.

Semantics must match kernels._sinkhorn_log_numpy exactly (up to float
summation order); the test suite cross-checks the two backends.
"""

import numpy as np

from libc.math cimport exp, log, fabs, isfinite, INFINITY


def sinkhorn_log(double[:, ::1] Mr, double[::1] loga, double[::1] logb,
                 int max_iters, double tol):
    """Alternate row/column log-potential updates until both L1 marginal
    violations drop below tol. Returns (u, v, iterations_used, converged).
    Non-finite potentials (kernel collapse) poison u with +inf so the caller
    can detect and report."""
    cdef Py_ssize_t V = Mr.shape[0]
    cdef Py_ssize_t K = Mr.shape[1]
    u_np = np.zeros(V, dtype=np.float64)
    v_np = np.zeros(K, dtype=np.float64)
    col_np = np.zeros(K, dtype=np.float64)
    cdef double[::1] u = u_np
    cdef double[::1] v = v_np
    cdef double[::1] colsum = col_np
    cdef Py_ssize_t i, j
    cdef int it
    cdef int iters_used = 0
    cdef bint converged = False
    cdef bint bad = False
    cdef double m, s, t, row_err, col_err, rowsum, p

    for it in range(1, max_iters + 1):
        iters_used = it
        for i in range(V):
            m = -INFINITY
            for j in range(K):
                t = Mr[i, j] + v[j]
                if t > m:
                    m = t
            if not isfinite(m):
                bad = True
                break
            s = 0.0
            for j in range(K):
                s += exp(Mr[i, j] + v[j] - m)
            u[i] = loga[i] - (m + log(s))
        if bad:
            break
        for j in range(K):
            m = -INFINITY
            for i in range(V):
                t = Mr[i, j] + u[i]
                if t > m:
                    m = t
            if not isfinite(m):
                bad = True
                break
            s = 0.0
            for i in range(V):
                s += exp(Mr[i, j] + u[i] - m)
            v[j] = logb[j] - (m + log(s))
        if bad:
            break
        row_err = 0.0
        col_err = 0.0
        for j in range(K):
            colsum[j] = 0.0
        for i in range(V):
            rowsum = 0.0
            for j in range(K):
                p = exp(Mr[i, j] + u[i] + v[j])
                rowsum += p
                colsum[j] += p
            row_err += fabs(rowsum - exp(loga[i]))
        for j in range(K):
            col_err += fabs(colsum[j] - exp(logb[j]))
        if row_err < tol and col_err < tol:
            converged = True
            break
    if bad:
        u_np.fill(np.inf)
    return u_np, v_np, iters_used, converged

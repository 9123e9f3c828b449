# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops for the HHMM recursions and the direct kernel sum.

Array conventions shared with :mod:`hlis._fallback`:

* ``logf[t, p]``      log emission density of state ``p`` at position ``t``
* ``log_pi[k]``       log initial region probabilities
* ``log_c[p, k]``     log Pr(theta_1 = p | eta_1 = k)
* ``log_A[k, p, q]``  log a_pq(k)
* ``log_B[k, l]``     log b_kl

Position ``t`` (0-based) hands over to ``t + 1`` through ``B`` iff
``(t + 1) % S == 0``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY, sqrt, M_PI

cnp.import_array()

cdef enum:
    MAXK = 16


cdef inline double _lse2(double a, double b) nogil:
    cdef double mx
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    mx = a if a > b else b
    return mx + log(exp(a - mx) + exp(b - mx))


def forward_log(const double[:, ::1] logf, const double[::1] log_pi, const double[:, ::1] log_c,
                const double[:, :, ::1] log_A, const double[:, ::1] log_B, Py_ssize_t S):
    cdef Py_ssize_t m = logf.shape[0], K = log_pi.shape[0]
    cdef Py_ssize_t t, p, q, k, l
    cdef double acc, v
    cdef double u[2][MAXK]
    if K > MAXK:
        raise ValueError(f"K={K} exceeds compiled limit {MAXK}")
    out = np.empty((m, 2, K), dtype=np.float64)
    cdef double[:, :, ::1] la = out
    with nogil:
        for p in range(2):
            for k in range(K):
                la[0, p, k] = log_pi[k] + log_c[p, k] + logf[0, p]
        for t in range(m - 1):
            if (t + 1) % S == 0:
                for q in range(2):
                    for k in range(K):
                        acc = -INFINITY
                        for l in range(K):
                            acc = _lse2(acc, la[t, q, l] + log_B[l, k])
                        u[q][k] = acc
            else:
                for q in range(2):
                    for k in range(K):
                        u[q][k] = la[t, q, k]
            for p in range(2):
                for k in range(K):
                    acc = -INFINITY
                    for q in range(2):
                        acc = _lse2(acc, u[q][k] + log_A[k, q, p])
                    la[t + 1, p, k] = logf[t + 1, p] + acc
    return out


def backward_log(const double[:, ::1] logf, const double[:, :, ::1] log_A,
                 const double[:, ::1] log_B, Py_ssize_t S):
    cdef Py_ssize_t m = logf.shape[0], K = log_A.shape[0]
    cdef Py_ssize_t t, p, q, k, l
    cdef double acc
    cdef double w[2][MAXK]
    cdef double v[2][MAXK]
    if K > MAXK:
        raise ValueError(f"K={K} exceeds compiled limit {MAXK}")
    out = np.empty((m, 2, K), dtype=np.float64)
    cdef double[:, :, ::1] lb = out
    with nogil:
        for p in range(2):
            for k in range(K):
                lb[m - 1, p, k] = 0.0
        for t in range(m - 2, -1, -1):
            for q in range(2):
                for l in range(K):
                    w[q][l] = logf[t + 1, q] + lb[t + 1, q, l]
            for p in range(2):
                for l in range(K):
                    acc = -INFINITY
                    for q in range(2):
                        acc = _lse2(acc, w[q][l] + log_A[l, p, q])
                    v[p][l] = acc
            if (t + 1) % S == 0:
                for p in range(2):
                    for k in range(K):
                        acc = -INFINITY
                        for l in range(K):
                            acc = _lse2(acc, v[p][l] + log_B[k, l])
                        lb[t, p, k] = acc
            else:
                for p in range(2):
                    for k in range(K):
                        lb[t, p, k] = v[p][k]
    return out


def transition_stats(const double[:, :, ::1] la, const double[:, :, ::1] lb,
                     const double[:, ::1] logf, const double[:, :, ::1] log_A,
                     const double[:, ::1] log_B, Py_ssize_t S):
    """Accumulate sum_j zeta_j(p, q, l) and the boundary sum of nu_j(k, l)."""
    cdef Py_ssize_t m = la.shape[0], K = la.shape[2]
    cdef Py_ssize_t t, p, q, k, l, n
    cdef double mx, tot, v, base
    cdef bint boundary
    cdef double e[2][2][MAXK][MAXK]
    if K > MAXK:
        raise ValueError(f"K={K} exceeds compiled limit {MAXK}")
    zeta = np.zeros((2, 2, K), dtype=np.float64)
    nu = np.zeros((K, K), dtype=np.float64)
    cdef double[:, :, ::1] zs = zeta
    cdef double[:, ::1] ns = nu
    with nogil:
        for t in range(m - 1):
            boundary = (t + 1) % S == 0
            mx = -INFINITY
            for p in range(2):
                for q in range(2):
                    for k in range(K):
                        base = la[t, p, k] + logf[t + 1, q]
                        for l in range(K):
                            if boundary:
                                v = base + lb[t + 1, q, l] + log_A[l, p, q] + log_B[k, l]
                            elif k == l:
                                v = base + lb[t + 1, q, l] + log_A[l, p, q]
                            else:
                                v = -INFINITY
                            e[p][q][k][l] = v
                            if v > mx:
                                mx = v
            tot = 0.0
            for p in range(2):
                for q in range(2):
                    for k in range(K):
                        for l in range(K):
                            v = exp(e[p][q][k][l] - mx)
                            e[p][q][k][l] = v
                            tot = tot + v
            for p in range(2):
                for q in range(2):
                    for k in range(K):
                        for l in range(K):
                            v = e[p][q][k][l] / tot
                            zs[p, q, l] += v
                            if boundary:
                                ns[k, l] += v
    return zeta, nu


def kde_direct(const double[::1] points, const double[::1] weights, double h,
               const double[::1] queries):
    """Unnormalized sum_i w_i K_h(query - x_i) for every query."""
    cdef Py_ssize_t n = points.shape[0], nq = queries.shape[0]
    cdef Py_ssize_t i, j
    cdef double acc, d, inv_h = 1.0 / h
    cdef double norm = 1.0 / (h * sqrt(2.0 * M_PI))
    out = np.empty(nq, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for j in range(nq):
            acc = 0.0
            for i in range(n):
                d = (queries[j] - points[i]) * inv_h
                acc = acc + weights[i] * exp(-0.5 * d * d)
            res[j] = acc * norm
    return out

"""Pure-numpy versions of the kernels in ``_kernels.pyx``.

Same signatures and array conventions; used when the compiled module is not
available or ``HLIS_PURE_PYTHON`` is set.
"""

import numpy as np


def _lse(a, axis):
    mx = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - safe), axis=axis, keepdims=True)) + safe
    return np.squeeze(out, axis=axis)


def forward_log(logf, log_pi, log_c, log_A, log_B, S):
    m = logf.shape[0]
    K = log_pi.shape[0]
    la = np.empty((m, 2, K))
    la[0] = log_pi[None, :] + log_c + logf[0][:, None]
    # log_A[k, q, p] -> (q, p, k)
    A_qpk = np.transpose(log_A, (1, 2, 0))
    for t in range(m - 1):
        if (t + 1) % S == 0:
            # u[q, k] = lse_l la[t, q, l] + log_B[l, k]
            u = _lse(la[t][:, :, None] + log_B[None, :, :], axis=1)
        else:
            u = la[t]
        la[t + 1] = logf[t + 1][:, None] + _lse(u[:, None, :] + A_qpk, axis=0)
    return la


def backward_log(logf, log_A, log_B, S):
    m = logf.shape[0]
    K = log_A.shape[0]
    lb = np.empty((m, 2, K))
    lb[m - 1] = 0.0
    # log_A[l, p, q] -> (p, q, l)
    A_pql = np.transpose(log_A, (1, 2, 0))
    for t in range(m - 2, -1, -1):
        w = logf[t + 1][:, None] + lb[t + 1]  # (q, l)
        v = _lse(w[None, :, :] + A_pql, axis=1)  # (p, l)
        if (t + 1) % S == 0:
            lb[t] = _lse(v[:, None, :] + log_B[None, :, :], axis=2)
        else:
            lb[t] = v
    return lb


def log_xi(la, lb, logf, log_A, log_B, S):
    """Normalized log xi[t, p, q, k, l] for t = 0..m-2."""
    m, _, K = la.shape
    t = np.arange(m - 1)
    boundary = (t + 1) % S == 0
    diag = np.where(np.eye(K, dtype=bool), 0.0, -np.inf)
    trans = np.where(boundary[:, None, None], log_B[None], diag[None])  # (t, k, l)
    e = (la[:-1, :, None, :, None]
         + logf[1:, None, :, None, None]
         + lb[1:, None, :, None, :]
         + np.transpose(log_A, (1, 2, 0))[None, :, :, None, :]
         + trans[:, None, None, :, :])
    flat = e.reshape(m - 1, -1)
    norm = _lse(flat, axis=1)
    return e - norm[:, None, None, None, None]


def transition_stats(la, lb, logf, log_A, log_B, S):
    m, _, K = la.shape
    if m < 2:
        return np.zeros((2, 2, K)), np.zeros((K, K))
    xi = np.exp(log_xi(la, lb, logf, log_A, log_B, S))
    boundary = (np.arange(m - 1) + 1) % S == 0
    zeta = xi.sum(axis=(0, 3))
    nu = xi[boundary].sum(axis=(0, 1, 2))
    return zeta, nu


def kde_direct(points, weights, h, queries, chunk=2048):
    norm = 1.0 / (h * np.sqrt(2.0 * np.pi))
    out = np.empty(len(queries))
    for s in range(0, len(queries), chunk):
        d = (queries[s:s + chunk, None] - points[None, :]) / h
        out[s:s + chunk] = np.exp(-0.5 * d * d) @ weights
    return out * norm

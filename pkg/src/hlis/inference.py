"""Forward-backward inference for the HHMM and the HLIS statistic.

All recursions run in log space.  The transition out of position ``j``
(1-based) uses the region matrix ``B`` iff ``j`` is a multiple of ``S``;
inside a block the region is copied, so the ``l``-sum collapses to ``l = k``.
The theta transition into position ``j + 1`` is governed by the region at
``j + 1``, which is also the reading under which the pairwise posteriors
normalize against exhaustive enumeration.
"""

from __future__ import annotations

import io
import itertools
from dataclasses import dataclass

import numpy as np

from . import _backend, _fallback
from .model import ModelParams, boundary_mask, require_valid


def _lse(a, axis=None):
    return _fallback._lse(a, axis)


def _as_z(z):
    z = np.ascontiguousarray(z, dtype=float)
    if z.ndim != 1 or len(z) < 1:
        raise ValueError("z must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(z)):
        raise ValueError("z contains non-finite values")
    return z


@dataclass(frozen=True)
class ForwardBackwardTables:
    log_alpha: np.ndarray  # (m, 2, K)
    log_beta: np.ndarray  # (m, 2, K)
    log_evidence: float


@dataclass(frozen=True)
class PosteriorBundle:
    """Posterior quantities for one sequence under one parameter set.

    ``xi``, ``nu`` and ``zeta`` are per-position arrays and are ``None`` when
    the bundle was computed without materializing them; ``zeta_sum`` and
    ``nu_boundary_sum`` (the M-step sufficient statistics) are always present.
    """

    gamma: np.ndarray  # (m, 2)
    phi1: np.ndarray  # (K,)
    rho1: np.ndarray  # (2, K)
    hlis: np.ndarray  # (m,)
    region: np.ndarray  # (m, K)  Pr(eta_j = k | z)
    zeta_sum: np.ndarray  # (2, 2, K)
    nu_boundary_sum: np.ndarray  # (K, K)
    log_evidence: float
    S: int
    xi: np.ndarray | None = None  # (m-1, 2, 2, K, K)
    nu: np.ndarray | None = None  # (m-1, K, K)
    zeta: np.ndarray | None = None  # (m-1, 2, 2, K)

    @property
    def m(self):
        return len(self.hlis)

    def to_tsv(self):
        out = io.StringIO()
        out.write("index\thlis\tgamma0\tgamma1\n")
        for i in range(self.m):
            out.write(f"{i + 1}\t{self.hlis[i]!r}\t{self.gamma[i, 0]!r}\t{self.gamma[i, 1]!r}\n")
        return out.getvalue()


def forward_pass(p: ModelParams, z) -> np.ndarray:
    require_valid(p)
    z = _as_z(z)
    log_pi, log_c, log_A, log_B = p.log_arrays()
    return _backend.forward_log(p.log_emissions(z), log_pi, log_c, log_A, log_B, p.S)


def backward_pass(p: ModelParams, z) -> np.ndarray:
    require_valid(p)
    z = _as_z(z)
    _, _, log_A, log_B = p.log_arrays()
    return _backend.backward_log(p.log_emissions(z), log_A, log_B, p.S)


def _tables(p, z, logf=None):
    log_pi, log_c, log_A, log_B = p.log_arrays()
    if logf is None:
        logf = p.log_emissions(z)
    la = _backend.forward_log(logf, log_pi, log_c, log_A, log_B, p.S)
    lb = _backend.backward_log(logf, log_A, log_B, p.S)
    ev = float(_lse(la[-1].ravel(), axis=0))
    return ForwardBackwardTables(la, lb, ev), logf


def forward_backward(p: ModelParams, z) -> ForwardBackwardTables:
    require_valid(p)
    return _tables(p, _as_z(z))[0]


def observed_log_likelihood(p: ModelParams, z) -> float:
    """log Pr(z | params)."""
    la = forward_pass(p, z)
    return float(_lse(la[-1].ravel(), axis=0))


def _state_posteriors(tables):
    s = tables.log_alpha + tables.log_beta
    norm = _lse(s.reshape(len(s), -1), axis=1)
    post = np.exp(s - norm[:, None, None])
    return post / post.sum(axis=(1, 2), keepdims=True)


def compute_hlis(p: ModelParams, z) -> np.ndarray:
    """Pr(theta_j = 0 | z) for every position."""
    require_valid(p)
    tables, _ = _tables(p, _as_z(z))
    post = _state_posteriors(tables)
    return np.clip(post[:, 0, :].sum(axis=1), 0.0, 1.0)


def hlis_decomposition(p: ModelParams, z):
    """Split HLIS into region weights and region-specific LIS values.

    Returns ``(weights, lis)`` of shape ``(m, K)`` with
    ``weights[j, k] = Pr(eta_j = k | z)`` and
    ``lis[j, k] = Pr(theta_j = 0 | eta_j = k, z)``, so that
    ``(weights * lis).sum(1)`` is the HLIS sequence.
    """
    require_valid(p)
    tables, _ = _tables(p, _as_z(z))
    post = _state_posteriors(tables)
    weights = post.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        lis = np.where(weights > 0, post[:, 0, :] / weights, np.nan)
    return weights, lis


def compute_posteriors(p: ModelParams, z, materialize=True, logf=None) -> PosteriorBundle:
    """E-step quantities.

    With ``materialize=False`` only the summed transition statistics are
    formed (O(m K) memory) using the compiled accumulator.
    """
    require_valid(p)
    z = _as_z(z)
    tables, logf = _tables(p, z, logf)
    la, lb = tables.log_alpha, tables.log_beta
    K, S, m = p.K, p.S, len(z)
    post = _state_posteriors(tables)
    gamma = post.sum(axis=2)
    rho1 = post[0]
    _, _, log_A, log_B = p.log_arrays()
    xi = nu = zeta = None
    if materialize:
        if m > 1:
            xi = np.exp(_fallback.log_xi(la, lb, logf, log_A, log_B, S))
        else:
            xi = np.zeros((0, 2, 2, K, K))
        nu = xi.sum(axis=(1, 2))
        zeta = xi.sum(axis=3)
        zeta_sum = zeta.sum(axis=0)
        nu_boundary_sum = nu[boundary_mask(m, S)].sum(axis=0)
    else:
        zeta_sum, nu_boundary_sum = _backend.transition_stats(la, lb, logf, log_A, log_B, S)
    return PosteriorBundle(
        gamma=gamma, phi1=rho1.sum(axis=0), rho1=rho1,
        hlis=np.clip(gamma[:, 0], 0.0, 1.0), region=post.sum(axis=1),
        zeta_sum=np.asarray(zeta_sum), nu_boundary_sum=np.asarray(nu_boundary_sum),
        log_evidence=tables.log_evidence, S=S, xi=xi, nu=nu, zeta=zeta)


# ---------------------------------------------------------------------------
# exhaustive enumeration (test oracle)

MAX_ENUM_PATHS = 1 << 22


def brute_force_posterior(p: ModelParams, z) -> PosteriorBundle:
    """Exact posteriors by summing the joint over every admissible path.

    Region paths are enumerated per block, so eta is constant within blocks.
    Only intended for tiny instances (``m <= 12``, ``K <= 3``).
    """
    require_valid(p)
    z = _as_z(z)
    m, K, S = len(z), p.K, p.S
    n_blocks = -(-m // S)
    if m > 12 or K > 3 or (2 ** m) * K ** n_blocks > MAX_ENUM_PATHS:
        raise ValueError("instance too large for enumeration")
    thetas = np.array(list(itertools.product((0, 1), repeat=m)), dtype=np.int64)
    blocks = np.array(list(itertools.product(range(K), repeat=n_blocks)), dtype=np.int64)
    etas = np.repeat(blocks, S, axis=1)[:, :m]

    with np.errstate(divide="ignore"):
        lpi, lc, lA, lB = (np.log(a) for a in (p.pi, p.c, p.A, p.B))
        lf = np.log(np.maximum(np.column_stack([p.f0.pdf(z), p.f1.pdf(z)]), 1e-300))
    # joint[e, t]
    eta_part = lpi[etas[:, 0]] + lB[blocks[:, :-1], blocks[:, 1:]].sum(axis=1)
    theta_part = lf[np.arange(m), thetas].sum(axis=1)
    joint = eta_part[:, None] + theta_part[None, :]
    joint = joint + lc[thetas[None, :, 0], etas[:, None, 0]]
    for j in range(m - 1):
        joint = joint + lA[etas[:, None, j + 1], thetas[None, :, j], thetas[None, :, j + 1]]
    mx = joint.max()
    w = np.exp(joint - mx)
    total = w.sum()
    log_evidence = float(np.log(total) + mx)
    w /= total

    w_theta = w.sum(axis=0)
    w_eta = w.sum(axis=1)
    gamma = np.empty((m, 2))
    region = np.empty((m, K))
    for j in range(m):
        gamma[j] = np.bincount(thetas[:, j], w_theta, minlength=2)
        region[j] = np.bincount(etas[:, j], w_eta, minlength=K)
    xi = np.zeros((max(m - 1, 0), 2, 2, K, K))
    for j in range(m - 1):
        idx = (((thetas[None, :, j] * 2 + thetas[None, :, j + 1]) * K
                + etas[:, None, j]) * K + etas[:, None, j + 1])
        xi[j] = np.bincount(idx.ravel(), w.ravel(), minlength=4 * K * K).reshape(2, 2, K, K)
    e0 = etas[:, 0]
    t0 = thetas[:, 0]
    rho1 = np.bincount((t0[None, :] * K + e0[:, None]).ravel(), w.ravel(),
                       minlength=2 * K).reshape(2, K)
    nu = xi.sum(axis=(1, 2))
    zeta = xi.sum(axis=3)
    return PosteriorBundle(
        gamma=gamma, phi1=rho1.sum(axis=0), rho1=rho1, hlis=gamma[:, 0].copy(),
        region=region, zeta_sum=zeta.sum(axis=0),
        nu_boundary_sum=nu[boundary_mask(m, S)].sum(axis=0),
        log_evidence=log_evidence, S=S, xi=xi, nu=nu, zeta=zeta)

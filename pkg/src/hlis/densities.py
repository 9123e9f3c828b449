"""Emission densities: standard normal, Gaussian mixtures and weighted kernels.

Every density exposes ``pdf``, ``logpdf`` (clamped below at ``TINY``),
``sample`` and a JSON-friendly ``to_dict``.  ``density_from_dict`` inverts
``to_dict``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from . import _backend

TINY = 1e-300
SQRT_2PI = np.sqrt(2.0 * np.pi)

#: point-pair budget below which kernel sums are evaluated exactly
DIRECT_LIMIT = 4_000_000
#: absolute error budget of the binned kernel sum, in density units
BINNED_TOL = 1e-6


def _norm_pdf(z, mean=0.0, sd=1.0):
    u = (z - mean) / sd
    return np.exp(-0.5 * u * u) / (sd * SQRT_2PI)


def _check_finite(z):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("density evaluated at non-finite z")
    return z


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StandardNormal:
    kind = "standard_normal"

    def pdf(self, z):
        return _norm_pdf(_check_finite(z))

    def logpdf(self, z):
        return np.log(np.maximum(self.pdf(z), TINY))

    def sample(self, rng, n):
        return rng.standard_normal(n)

    def scale(self):
        return 1.0

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    kind = "gaussian_mixture"

    def __post_init__(self):
        w, mu, sd = (_frozen(x) for x in (self.weights, self.means, self.sds))
        if not (w.ndim == 1 and w.shape == mu.shape == sd.shape and len(w)):
            raise ValueError("weights, means and sds must be equal-length 1-d arrays")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if np.any(sd <= 0):
            raise ValueError("mixture sds must be strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "sds", sd)

    def pdf(self, z):
        z = _check_finite(z)
        out = np.zeros(np.shape(z))
        for w, mu, sd in zip(self.weights, self.means, self.sds):
            out = out + w * _norm_pdf(z, mu, sd)
        return out

    def logpdf(self, z):
        return np.log(np.maximum(self.pdf(z), TINY))

    def sample(self, rng, n):
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        return self.means[comp] + self.sds[comp] * rng.standard_normal(n)

    def scale(self):
        return float(np.max(np.abs(self.means)) + np.max(self.sds))

    def to_dict(self):
        return {"kind": self.kind, "weights": self.weights.tolist(),
                "means": self.means.tolist(), "sds": self.sds.tolist()}


@dataclass(frozen=True)
class WeightedKernel:
    """Gaussian kernel estimate ``sum_i w_i K_h(z - x_i)`` with ``sum w = 1``."""

    points: np.ndarray
    weights: np.ndarray
    bandwidth: float
    kind = "weighted_kernel"

    def __post_init__(self):
        x, w = _frozen(self.points), _frozen(self.weights)
        if x.ndim != 1 or x.shape != w.shape or not len(x):
            raise ValueError("points and weights must be equal-length 1-d arrays")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("kernel weights must be nonnegative and sum to 1")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be strictly positive")
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    def pdf(self, z):
        z = _check_finite(z)
        flat = np.atleast_1d(z).ravel()
        out = kernel_sum(self.points, self.weights, self.bandwidth, flat)
        return out.reshape(np.shape(z)) if np.ndim(z) else float(out[0])

    def logpdf(self, z):
        return np.log(np.maximum(self.pdf(z), TINY))

    def sample(self, rng, n):
        idx = rng.choice(len(self.points), size=n, p=self.weights)
        return self.points[idx] + self.bandwidth * rng.standard_normal(n)

    def scale(self):
        return float(np.max(np.abs(self.points)) + self.bandwidth)

    def to_dict(self):
        return {"kind": self.kind, "points": self.points.tolist(),
                "weights": self.weights.tolist(), "bandwidth": self.bandwidth}


def density_from_dict(d):
    kind = d["kind"]
    if kind == StandardNormal.kind:
        return StandardNormal()
    if kind == GaussianMixture.kind:
        return GaussianMixture(d["weights"], d["means"], d["sds"])
    if kind == WeightedKernel.kind:
        return WeightedKernel(d["points"], d["weights"], d["bandwidth"])
    raise ValueError(f"unknown density kind {kind!r}")


def normal(mean, sd=1.0):
    return GaussianMixture([1.0], [mean], [sd])


def simulation_alternative(lam, mu1):
    """``lam N(mu1, 1) + (1 - lam) N(2, 1)``."""
    if lam >= 1.0:
        return normal(mu1)
    if lam <= 0.0:
        return normal(2.0)
    return GaussianMixture([lam, 1.0 - lam], [mu1, 2.0], [1.0, 1.0])


# ---------------------------------------------------------------------------
# kernel sums

def weighted_kde(points, weights, h, query):
    """Weighted Gaussian kernel density estimate at ``query``.

    Parameters
    ----------
    points : array_like
        Support points ``z_j``.
    weights : array_like
        Nonnegative weights, not necessarily normalized.
    h : float
        Bandwidth.
    query : array_like
        Evaluation points.

    Returns
    -------
    ndarray
        ``sum_j w_j K_h(query - z_j) / sum_j w_j``.
    """
    points = np.ascontiguousarray(points, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    query = np.ascontiguousarray(np.atleast_1d(query), dtype=float)
    if not h > 0:
        raise ValueError("bandwidth must be strictly positive")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    total = weights.sum()
    if not total > 0:
        raise ValueError("weights sum to zero")
    return kernel_sum(points, weights / total, h, query)


def kernel_sum(points, weights, h, query):
    """Unnormalized weighted kernel sum, exact or binned depending on size."""
    points = np.ascontiguousarray(points, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    query = np.ascontiguousarray(query, dtype=float)
    if len(points) * len(query) <= DIRECT_LIMIT:
        return _backend.kde_direct(points, weights, float(h), query)
    return binned_kernel_sum(points, weights, h, query)


def binned_kernel_sum(points, weights, h, query, tol=BINNED_TOL):
    """Linear-binning approximation of the weighted kernel sum.

    Grid spacing is chosen so that the binning plus interpolation error stays
    below ``tol`` times the total weight.
    """
    # both errors are bounded by max|K_h''| delta^2 / 8 = delta^2 / (8 h^3 sqrt(2 pi))
    delta = np.sqrt(4.0 * tol * SQRT_2PI) * h ** 1.5
    lo = min(points.min(), query.min()) - 2 * delta
    hi = max(points.max(), query.max()) + 2 * delta
    n = int(np.ceil((hi - lo) / delta)) + 2
    pos = (points - lo) / delta
    i = np.floor(pos).astype(np.int64)
    frac = pos - i
    grid = np.bincount(i, weights * (1.0 - frac), minlength=n + 1)
    grid += np.bincount(i + 1, weights * frac, minlength=n + 1)
    half = int(np.ceil(9.0 * h / delta))
    kern = _norm_pdf(np.arange(-half, half + 1) * delta, 0.0, h)
    dens = fftconvolve(grid, kern, mode="full")[half:half + len(grid)]
    x = lo + delta * np.arange(len(grid))
    return np.interp(query, x, dens)


def weighted_quantile(sorted_x, sorted_w, q):
    cdf = (np.cumsum(sorted_w) - 0.5 * sorted_w) / sorted_w.sum()
    return np.interp(q, cdf, sorted_x)


def silverman_bandwidth(points, weights, order=None):
    """Weighted Silverman rule ``0.9 min(sd, IQR / 1.34) n_eff^(-1/5)``.

    ``order`` may carry a precomputed ``argsort`` of ``points``.
    """
    x = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0:
        raise ValueError("weights sum to zero")
    mean = np.dot(w, x) / total
    sd = np.sqrt(max(np.dot(w, (x - mean) ** 2) / total, 0.0))
    if order is None:
        order = np.argsort(x, kind="stable")
    q25, q75 = weighted_quantile(x[order], w[order], [0.25, 0.75])
    iqr = (q75 - q25) / 1.34
    spread = min(sd, iqr) if iqr > 0 else sd
    n_eff = total ** 2 / np.dot(w, w)
    h = 0.9 * spread * n_eff ** -0.2
    if not h > 0:
        raise ValueError("degenerate sample: zero spread")
    return float(h)

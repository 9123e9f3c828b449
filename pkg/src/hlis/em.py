"""EM fitting of the HHMM with weighted-kernel emission updates.

The parametric part of the M-step (pi, c, A, B) maximizes the expected
complete-data log-likelihood exactly.  The kernel density update does not, so
a full step that lowers the observed likelihood is replaced by the
density-frozen step, which cannot.  The trace is therefore nondecreasing.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .densities import StandardNormal, WeightedKernel, normal, silverman_bandwidth
from .inference import PosteriorBundle, compute_posteriors
from .model import ModelParams, validate_params

log = logging.getLogger(__name__)


class EmptyClassError(ValueError):
    """An M-step ratio had a zero denominator and no previous value to keep."""


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 500
    rel_tol: float = 1e-6
    restarts: int = 5
    bandwidth: float | None = None  # None -> weighted Silverman rule each M-step
    fix_null_density: bool = False
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("fixed bandwidth must be > 0")

    @property
    def bandwidth_rule(self):
        return "silverman" if self.bandwidth is None else "fixed"

    def to_dict(self):
        return {"max_iters": self.max_iters, "rel_tol": self.rel_tol,
                "restarts": self.restarts, "bandwidth_rule": self.bandwidth_rule,
                "bandwidth": self.bandwidth, "fix_null_density": self.fix_null_density,
                "seed": self.seed, "n_jobs": self.n_jobs}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        rule = d.pop("bandwidth_rule", None)
        if rule == "silverman":
            d["bandwidth"] = None
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class FitResult:
    params: ModelParams
    trace: tuple
    converged: bool
    iterations: int
    restart: int
    restart_loglik: tuple = ()
    warnings: tuple = ()
    message: str = ""
    config: FitConfig = field(default_factory=FitConfig)

    @property
    def log_likelihood(self):
        return self.trace[-1] if self.trace else -np.inf

    def to_dict(self):
        return {"params": self.params.to_dict(), "trace": list(self.trace),
                "log_likelihood": self.log_likelihood, "converged": self.converged,
                "iterations": self.iterations, "restart": self.restart,
                "restart_loglik": list(self.restart_loglik),
                "warnings": list(self.warnings), "message": self.message,
                "config": self.config.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(params=ModelParams.from_dict(d["params"]), trace=tuple(d["trace"]),
                   converged=d["converged"], iterations=d["iterations"],
                   restart=d["restart"], restart_loglik=tuple(d.get("restart_loglik", ())),
                   warnings=tuple(d.get("warnings", ())), message=d.get("message", ""),
                   config=FitConfig.from_dict(d.get("config", {})))

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def initial_params(K, S, rng):
    """Randomized starting point; nulls dominate, regions start persistent."""
    A = np.empty((K, 2, 2))
    for k in range(K):
        u = rng.uniform(-0.05, 0.05, size=2)
        A[k] = [[0.8 + u[0], 0.2 - u[0]], [0.2 - u[1], 0.8 + u[1]]]
    if K == 1:
        B = np.ones((1, 1))
    else:
        B = np.full((K, K), 0.2 / (K - 1))
        np.fill_diagonal(B, 0.8)
    c = np.tile([[0.7], [0.3]], (1, K))
    return ModelParams(K=K, S=S, pi=np.full(K, 1.0 / K), c=c, A=A, B=B,
                       f0=StandardNormal(), f1=normal(2.0, 1.0))


def _ratio_rows(num, prev, what, notes):
    """Normalize rows of ``num``; rows with zero mass keep ``prev``."""
    den = num.sum(axis=-1, keepdims=True)
    ok = den > 0
    out = np.where(ok, num / np.where(ok, den, 1.0), np.nan)
    if not np.all(ok):
        if prev is None:
            raise EmptyClassError(f"zero denominator in {what} update")
        out = np.where(ok, out, prev)
        notes.append(f"empty posterior class in {what}; kept previous value")
    return out


def _kernel_update(z, w, cfg, order):
    total = w.sum()
    h = cfg.bandwidth if cfg.bandwidth is not None else silverman_bandwidth(z, w, order)
    return WeightedKernel(z, w / total, h)


def m_step_update(bundle: PosteriorBundle, z, S, cfg: FitConfig, previous=None,
                  notes=None, update_densities=True, order=None) -> ModelParams:
    """Closed-form parameter update from posterior statistics.

    Zero-mass rows keep their ``previous`` value (and a note is appended);
    without ``previous`` a zero denominator raises :class:`EmptyClassError`.
    """
    if notes is None:
        notes = []
    z = np.asarray(z, dtype=float)
    if len(z) != bundle.m:
        raise ValueError("bundle and z lengths differ")
    K = bundle.phi1.shape[0]
    prev = previous
    pi = _ratio_rows(bundle.phi1, None if prev is None else prev.pi, "pi", notes)
    c = _ratio_rows(bundle.rho1.T, None if prev is None else prev.c.T, "c", notes).T
    zeta = np.transpose(bundle.zeta_sum, (2, 0, 1))  # (k, p, q)
    A = _ratio_rows(zeta, None if prev is None else prev.A, "A", notes)
    if K == 1:
        B = np.ones((1, 1))
    else:
        B = _ratio_rows(bundle.nu_boundary_sum, None if prev is None else prev.B, "B", notes)

    f0 = prev.f0 if prev is not None else StandardNormal()
    f1 = prev.f1 if prev is not None else normal(2.0)
    if update_densities:
        mass = bundle.gamma.sum(axis=0)
        for p in (0, 1):
            if p == 0 and cfg.fix_null_density:
                f0 = StandardNormal()
                continue
            if not mass[p] > 0:
                if prev is None:
                    raise EmptyClassError(f"zero posterior mass for density f{p}")
                notes.append(f"zero posterior mass for f{p}; kept previous density")
                continue
            new = _kernel_update(z, bundle.gamma[:, p], cfg, order)
            if p == 0:
                f0 = new
            else:
                f1 = new
    return ModelParams(K=K, S=S, pi=pi, c=c, A=A, B=B, f0=f0, f1=f1)


def _run_chain(z, K, S, cfg, restart):
    rng = np.random.default_rng([cfg.seed, restart])
    params = initial_params(K, S, rng)
    order = np.argsort(z, kind="stable")
    notes = []
    logf = params.log_emissions(z)
    bundle = compute_posteriors(params, z, materialize=False, logf=logf)
    ll = bundle.log_evidence
    trace = [ll]
    converged = False
    message = ""
    it = 0
    try:
        for it in range(1, cfg.max_iters + 1):
            cand = m_step_update(bundle, z, S, cfg, params, notes, order=order)
            logf_c = cand.log_emissions(z)
            b_c = compute_posteriors(cand, z, materialize=False, logf=logf_c)
            if not b_c.log_evidence >= ll:
                cand = m_step_update(bundle, z, S, cfg, params, notes,
                                     update_densities=False)
                logf_c = logf
                b_c = compute_posteriors(cand, z, materialize=False, logf=logf_c)
                if not b_c.log_evidence >= ll:
                    converged = True
                    message = "stalled at numerical precision"
                    break
            gain = (b_c.log_evidence - ll) / abs(ll)
            params, bundle, logf, ll = cand, b_c, logf_c, b_c.log_evidence
            trace.append(ll)
            if gain < cfg.rel_tol:
                converged = True
                break
    except ValueError as exc:
        message = f"fit failed: {exc}"
        converged = False
    if not validate_params(params).ok:
        raise RuntimeError("M-step produced invalid parameters")
    return FitResult(params=params, trace=tuple(trace), converged=converged,
                     iterations=it, restart=restart, warnings=tuple(dict.fromkeys(notes)),
                     message=message, config=cfg)


def _chain_job(args):
    return _run_chain(*args)


def em_fit(z, K, S, cfg: FitConfig | None = None) -> FitResult:
    """Fit the HHMM by EM from ``cfg.restarts`` random starts; keep the best."""
    cfg = cfg or FitConfig()
    z = np.ascontiguousarray(z, dtype=float)
    if len(z) < 2:
        raise ValueError("need at least two observations")
    if K < 1 or S < 1:
        raise ValueError("K and S must be >= 1")
    if not np.all(np.isfinite(z)):
        raise ValueError("z contains non-finite values")
    jobs = [(z, K, S, cfg, r) for r in range(cfg.restarts)]
    if cfg.n_jobs > 1 and cfg.restarts > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as ex:
            results = list(ex.map(_chain_job, jobs))
    else:
        results = [_chain_job(j) for j in jobs]
    finals = tuple(r.log_likelihood for r in results)
    usable = [r for r in results if not r.message.startswith("fit failed")]
    pool = usable or results
    best = max(pool, key=lambda r: (r.log_likelihood, -r.restart))
    return replace(best, restart_loglik=finals)


def n_free_params(K):
    """Structural parameter count (pi, c, A, B); kernel densities excluded."""
    return (K - 1) + K + 2 * K + K * (K - 1)


def bic_select_K(z, S, candidates, cfg: FitConfig | None = None):
    """Pick K by BIC = -2 logL + d log m; ties go to the smaller K.

    Returns ``(best_K, table, fits)`` where ``table`` is a list of per-K rows.
    """
    cfg = cfg or FitConfig()
    candidates = sorted(set(int(k) for k in candidates))
    if not candidates:
        raise ValueError("empty candidate set")
    m = len(z)
    table, fits = [], {}
    for K in candidates:
        row = {"K": K, "d": n_free_params(K), "densities_in_d": False}
        try:
            fit = em_fit(z, K, S, cfg)
        except ValueError as exc:
            row.update(loglik=None, bic=None, error=str(exc))
            table.append(row)
            continue
        if fit.message.startswith("fit failed"):
            row.update(loglik=None, bic=None, error=fit.message)
            table.append(row)
            continue
        fits[K] = fit
        row.update(loglik=fit.log_likelihood,
                   bic=-2.0 * fit.log_likelihood + row["d"] * np.log(m),
                   converged=fit.converged, error=None)
        table.append(row)
    scored = [r for r in table if r["bic"] is not None]
    if not scored:
        raise RuntimeError("every candidate fit failed")
    best = min(scored, key=lambda r: (r["bic"], r["K"]))["K"]
    return best, table, fits


# ---------------------------------------------------------------------------
# chain-free two-group model

@dataclass(frozen=True)
class TwoGroupFit:
    p0: float
    f0: object
    f1: object
    trace: tuple
    converged: bool
    iterations: int

    def lfdr(self, z):
        a = self.p0 * self.f0.pdf(z)
        b = (1.0 - self.p0) * self.f1.pdf(z)
        return np.clip(a / np.maximum(a + b, 1e-300), 0.0, 1.0)


def _two_group_ll(z, p0, f0, f1):
    return float(np.sum(np.log(np.maximum(p0 * f0.pdf(z) + (1 - p0) * f1.pdf(z), 1e-300))))


def fit_two_group(z, cfg: FitConfig | None = None, fix_null_density=True,
                  p0_init=0.8) -> TwoGroupFit:
    """EM for the iid mixture ``p0 f0 + (1 - p0) f1`` with a kernel ``f1``.

    Uses the same safeguard as the HHMM fit: a kernel step that lowers the
    likelihood is replaced by the proportion-only step.
    """
    cfg = cfg or FitConfig()
    z = np.ascontiguousarray(z, dtype=float)
    if len(z) < 2:
        raise ValueError("need at least two observations")
    order = np.argsort(z, kind="stable")
    p0, f0, f1 = p0_init, StandardNormal(), normal(2.0)
    ll = _two_group_ll(z, p0, f0, f1)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        a = p0 * f0.pdf(z)
        b = (1 - p0) * f1.pdf(z)
        w1 = b / np.maximum(a + b, 1e-300)
        new_p0 = float(1.0 - w1.mean())
        new_f0, new_f1 = f0, f1
        if w1.sum() > 0:
            new_f1 = _kernel_update(z, w1, cfg, order)
        if not fix_null_density and (1 - w1).sum() > 0:
            new_f0 = _kernel_update(z, 1 - w1, cfg, order)
        new_ll = _two_group_ll(z, new_p0, new_f0, new_f1)
        if not new_ll >= ll:
            new_f0, new_f1 = f0, f1
            new_ll = _two_group_ll(z, new_p0, f0, f1)
            if not new_ll >= ll:
                converged = True
                break
        gain = (new_ll - ll) / abs(ll)
        p0, f0, f1, ll = new_p0, new_f0, new_f1, new_ll
        trace.append(ll)
        if gain < cfg.rel_tol:
            converged = True
            break
    return TwoGroupFit(p0=p0, f0=f0, f1=f1, trace=tuple(trace), converged=converged,
                       iterations=it)

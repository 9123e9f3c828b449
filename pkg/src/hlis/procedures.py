"""Step-up decision procedures: HLIS (oracle and plug-in), LIS, Lfdr and BH."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .em import FitConfig, em_fit, fit_two_group
from .inference import compute_hlis
from .model import ModelParams


@dataclass(frozen=True)
class DecisionResult:
    reject: np.ndarray
    stat: np.ndarray
    l: int
    alpha: float
    procedure: str
    cutoff_interval: tuple | None = None

    @property
    def m(self):
        return len(self.reject)

    def to_dict(self):
        return {"procedure": self.procedure, "alpha": self.alpha, "l": self.l,
                "cutoff_interval": None if self.cutoff_interval is None
                else list(self.cutoff_interval),
                "stat": self.stat.tolist(), "reject": self.reject.astype(int).tolist()}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def to_tsv(self):
        out = io.StringIO()
        out.write("index\tstat\treject\n")
        for i in range(self.m):
            out.write(f"{i + 1}\t{self.stat[i]!r}\t{int(self.reject[i])}\n")
        return out.getvalue()


def _check_alpha(alpha):
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")


def step_up_select(stats, alpha, procedure="step-up") -> DecisionResult:
    """Reject the longest prefix of sorted stats whose running mean is <= alpha.

    Sorting is stable on ``(stat, index)``; a tied group at the cut is kept
    only as far as the prefix-mean condition allows.
    """
    stats = np.asarray(stats, dtype=float)
    _check_alpha(alpha)
    if stats.ndim != 1 or not np.all(np.isfinite(stats)):
        raise ValueError("stats must be a finite 1-d sequence")
    if np.any(stats < 0) or np.any(stats > 1):
        raise ValueError("stats must lie in [0, 1]")
    m = len(stats)
    order = np.argsort(stats, kind="stable")
    srt = stats[order]
    means = np.cumsum(srt) / np.arange(1, m + 1)
    ok = np.flatnonzero(means <= alpha)
    # alpha = 0 admits only the empty prefix
    l = int(ok[-1] + 1) if len(ok) and alpha > 0 else 0
    reject = np.zeros(m, dtype=bool)
    reject[order[:l]] = True
    lo = srt[l - 1] if l > 0 else 0.0
    hi = srt[l] if l < m else 1.0
    return DecisionResult(reject=reject, stat=stats, l=l, alpha=float(alpha),
                          procedure=procedure, cutoff_interval=(float(lo), float(hi)))


def hlis_oracle_procedure(p: ModelParams, z, alpha) -> DecisionResult:
    return step_up_select(compute_hlis(p, z), alpha, "hlis-oracle")


def hlis_data_driven_procedure(z, K, S, alpha, cfg: FitConfig | None = None,
                               procedure="hlis"):
    """Fit the HHMM, then step up on the plug-in HLIS.

    Returns ``(decision, fit)``; raises ``RuntimeError`` when the fit failed.
    """
    _check_alpha(alpha)
    fit = em_fit(z, K, S, cfg)
    if fit.message.startswith("fit failed"):
        raise RuntimeError(fit.message)
    return step_up_select(compute_hlis(fit.params, z), alpha, procedure), fit


def lis_procedure(z, alpha, cfg: FitConfig | None = None, S=1):
    """Plain two-state HMM (one region type), kernel-fitted alternative.

    With one region type the block size has no effect on the model.
    """
    decision, _ = hlis_data_driven_procedure(z, 1, S, alpha, cfg, procedure="lis")
    return decision


def lfdr_procedure(z, alpha, cfg: FitConfig | None = None, fix_null_density=True):
    cfg = cfg or FitConfig()
    fit = fit_two_group(z, cfg, fix_null_density=fix_null_density)
    return step_up_select(fit.lfdr(np.asarray(z, dtype=float)), alpha, "lfdr")


def two_sided_pvalues(z):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("z contains non-finite values")
    return 2.0 * norm.sf(np.abs(z))


def bh_from_pvalues(pvals, alpha, procedure="bh") -> DecisionResult:
    pvals = np.asarray(pvals, dtype=float)
    _check_alpha(alpha)
    m = len(pvals)
    order = np.argsort(pvals, kind="stable")
    ok = np.flatnonzero(pvals[order] <= alpha * np.arange(1, m + 1) / m)
    l = int(ok[-1] + 1) if len(ok) else 0
    reject = np.zeros(m, dtype=bool)
    reject[order[:l]] = True
    return DecisionResult(reject=reject, stat=pvals, l=l, alpha=float(alpha),
                          procedure=procedure)


def bh_procedure(z, alpha) -> DecisionResult:
    """Benjamini-Hochberg on two-sided N(0, 1) p-values."""
    return bh_from_pvalues(two_sided_pvalues(z), alpha)

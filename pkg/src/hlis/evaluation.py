"""Simulation settings, replication driver and error-rate metrics."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .densities import StandardNormal, simulation_alternative
from .em import FitConfig, em_fit, fit_two_group
from .inference import compute_hlis
from .model import ModelParams, simulate_dataset, validate_params
from .procedures import bh_procedure, step_up_select

PROCEDURES = ("hlis-oracle", "hlis", "lis", "lfdr", "bh")


def classification_metrics(truth, reject):
    """``(FDP, FNP, V, R, T)`` with FDP = V / max(R, 1), FNP = T / max(m - R, 1)."""
    truth = np.asarray(truth).astype(bool)
    reject = np.asarray(reject).astype(bool)
    if truth.shape != reject.shape:
        raise ValueError("truth and reject lengths differ")
    m = len(truth)
    R = int(reject.sum())
    V = int((reject & ~truth).sum())
    T = int((~reject & truth).sum())
    return V / max(R, 1), T / max(m - R, 1), V, R, T


# ---------------------------------------------------------------------------
# settings

@dataclass(frozen=True)
class SettingPreset:
    """One simulation setting: fixed values plus one swept parameter.

    ``a10`` is a_10(1), the 1 -> 0 switch of region type 1; ``b21`` is the
    2 -> 1 region transition.  The alternative density is
    ``lam N(mu1, 1) + (1 - lam) N(2, 1)``.
    """

    name: str
    K: int
    fixed: dict
    swept: str
    grid: tuple
    S: int = 30
    m: int = 9000

    def __post_init__(self):
        if not self.grid:
            raise ValueError("empty grid")

    def values(self, grid_index):
        v = dict(self.fixed)
        v[self.swept] = self.grid[grid_index]
        return v

    def params(self, grid_index) -> ModelParams:
        v = self.values(grid_index)
        a10, b21 = v["a10"], v["b21"]
        A1 = [[0.9, 0.1], [a10, 1.0 - a10]]
        A2 = [[0.3, 0.7], [0.7, 0.3]]
        if self.K == 2:
            pi = [0.5, 0.5]
            B = [[0.9, 0.1], [b21, 1.0 - b21]]
            A = [A1, A2]
        else:
            pi = [0.4, 0.3, 0.3]
            B = [[0.8, 0.1, 0.1], [b21, 0.9 - b21, 0.1], [0.1, 0.1, 0.8]]
            A = [A1, A2, [[0.7, 0.3], [0.2, 0.8]]]
        c = np.full((2, self.K), 0.5)
        p = ModelParams(K=self.K, S=self.S, pi=pi, c=c, A=A, B=B, f0=StandardNormal(),
                        f1=simulation_alternative(v["lam"], v["mu1"]))
        report = validate_params(p)
        if not report.ok:
            raise ValueError(f"{self.name}: " + "; ".join(report.violations))
        return p

    def to_dict(self):
        return {"name": self.name, "K": self.K, "S": self.S, "m": self.m,
                "fixed": dict(self.fixed), "swept": self.swept, "grid": list(self.grid)}

    @classmethod
    def from_dict(cls, d):
        return cls(name=d["name"], K=d["K"], fixed=dict(d["fixed"]), swept=d["swept"],
                   grid=tuple(d["grid"]), S=d.get("S", 30), m=d.get("m", 9000))


def _grid(lo, hi, n=6):
    return tuple(round(float(x), 10) for x in np.linspace(lo, hi, n))


def _case(K, start):
    # (lam, mu1, b21, a10) per setting; None marks the swept parameter
    rows = [
        dict(lam=1.0, mu1=2.0, b21=0.1, a10=None),
        dict(lam=1.0, mu1=2.0, b21=None, a10=0.2),
        dict(lam=1.0, mu1=None, b21=0.1, a10=0.2),
        dict(lam=0.5, mu1=1.0, b21=0.1, a10=None),
        dict(lam=0.5, mu1=1.5 if K == 2 else 1.0, b21=None, a10=0.2),
        dict(lam=0.5, mu1=None, b21=0.1, a10=0.2),
    ]
    ranges = {"a10": (0.1, 0.2), "b21": (0.1, 0.2), "mu1": (1.0, 2.0)}
    out = {}
    for i, row in enumerate(rows):
        swept = next(k for k, v in row.items() if v is None)
        fixed = {k: v for k, v in row.items() if v is not None}
        n = start + i
        out[n] = SettingPreset(name=f"setting{n}", K=K, fixed=fixed, swept=swept,
                               grid=_grid(*ranges[swept]))
    return out


SETTINGS = {**_case(2, 1), **_case(3, 7)}


def get_setting(n) -> SettingPreset:
    try:
        return SETTINGS[int(n)]
    except (KeyError, ValueError):
        raise KeyError(f"unknown setting {n!r}; choose 1..12") from None


# ---------------------------------------------------------------------------
# replication driver

def cell_seed(seed, grid_index, rep):
    return int(np.random.SeedSequence([seed, grid_index, rep]).generate_state(1)[0])


def default_fit_config(seed):
    # simulations use a known N(0, 1) null
    return FitConfig(fix_null_density=True, seed=seed)


def _min_step(trace):
    return float(np.min(np.diff(trace))) if len(trace) > 1 else 0.0


def run_procedure(name, data, truth_params, alpha, cfg, K, S):
    """Run one named procedure; returns ``(decision, min EM trace step or nan)``."""
    z = data.z
    if name == "hlis-oracle":
        return step_up_select(compute_hlis(truth_params, z), alpha, name), math.nan
    if name in ("hlis", "lis"):
        fit = em_fit(z, K if name == "hlis" else 1, S, cfg)
        if fit.message.startswith("fit failed"):
            raise RuntimeError(fit.message)
        dec = step_up_select(compute_hlis(fit.params, z), alpha, name)
        return dec, _min_step(fit.trace)
    if name == "lfdr":
        fit = fit_two_group(z, cfg)
        return step_up_select(fit.lfdr(z), alpha, name), _min_step(fit.trace)
    if name == "bh":
        return bh_procedure(z, alpha), math.nan
    raise ValueError(f"unknown procedure {name!r}")


def _run_cell(args):
    preset, grid_index, rep, procedures, alpha, seed, m, cfg_over = args
    params = preset.params(grid_index)
    s = cell_seed(seed, grid_index, rep)
    data = simulate_dataset(params, m, s)
    cfg = default_fit_config(s)
    if cfg_over:
        cfg = replace(cfg, **cfg_over)
    rows = []
    for name in procedures:
        t0 = time.perf_counter()
        row = {"setting": preset.name, "grid_index": grid_index,
               "grid_value": preset.grid[grid_index], "procedure": name, "rep": rep}
        try:
            dec, step = run_procedure(name, data, params, alpha, cfg, preset.K, preset.S)
            fdp, fnp, V, R, T = classification_metrics(data.theta, dec.reject)
            row.update(fdp=fdp, fnp=fnp, rejections=R, V=V, T=T, em_min_step=step,
                       failed=False, error="")
        except (RuntimeError, ValueError) as exc:
            row.update(fdp=math.nan, fnp=math.nan, rejections=-1, V=-1, T=-1,
                       em_min_step=math.nan, failed=True, error=str(exc))
        row["runtime"] = time.perf_counter() - t0
        rows.append(row)
    return rows


@dataclass
class ExperimentReport:
    setting: dict
    alpha: float
    reps: int
    seed: int
    rows: list = field(default_factory=list)

    def aggregates(self):
        """Per (grid value, procedure) means and Monte Carlo standard errors."""
        groups = {}
        for r in self.rows:
            groups.setdefault((r["grid_index"], r["procedure"]), []).append(r)
        out = []
        for (gi, proc), rs in sorted(groups.items(),
                                     key=lambda kv: (kv[0][0], PROCEDURES.index(kv[0][1]))):
            ok = sorted((r for r in rs if not r["failed"]), key=lambda r: r["rep"])
            n = len(ok)
            agg = {"setting": self.setting["name"], "grid_index": gi,
                   "grid_value": rs[0]["grid_value"], "procedure": proc, "n": n,
                   "failed": len(rs) - n}
            for key, name in (("fdp", "fdr"), ("fnp", "fnr"), ("rejections", "mean_rejections")):
                vals = [r[key] for r in ok]
                mean = math.fsum(vals) / n if n else math.nan
                agg[name] = mean
                if key != "rejections":
                    var = math.fsum((v - mean) ** 2 for v in vals) / (n - 1) if n > 1 else math.nan
                    agg[name + "_se"] = math.sqrt(var / n) if n > 1 else math.nan
            out.append(agg)
        return out

    def timings(self):
        """Mean wall time per (grid value, procedure); kept apart so reports stay reproducible."""
        groups = {}
        for r in self.rows:
            groups.setdefault((r["grid_index"], r["procedure"]), []).append(r["runtime"])
        return [{"grid_index": gi, "procedure": proc, "runtime": math.fsum(v) / len(v)}
                for (gi, proc), v in sorted(groups.items())]

    def cell(self, procedure, grid_index=None):
        aggs = [a for a in self.aggregates() if a["procedure"] == procedure
                and (grid_index is None or a["grid_index"] == grid_index)]
        if len(aggs) != 1:
            raise KeyError((procedure, grid_index))
        return aggs[0]

    def per_rep(self, procedure, key, grid_index=None):
        rs = [r for r in self.rows if r["procedure"] == procedure and not r["failed"]
              and (grid_index is None or r["grid_index"] == grid_index)]
        return np.array([r[key] for r in sorted(rs, key=lambda r: (r["grid_index"], r["rep"]))])

    CSV_COLUMNS = ("setting", "grid_value", "procedure", "rep", "fdp", "fnp", "rejections")

    def to_csv(self):
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for r in sorted(self.rows, key=lambda r: (r["grid_index"], r["rep"], r["procedure"])):
            w.writerow([r[c] if not isinstance(r[c], float) else repr(r[c])
                        for c in self.CSV_COLUMNS])
        return out.getvalue()

    def summary(self):
        return {"setting": self.setting, "alpha": self.alpha, "reps": self.reps,
                "seed": self.seed, "lis_variant": "LIS (kernel variant)",
                "aggregates": self.aggregates()}

    def to_json(self, **kw):
        return json.dumps(self.summary(), **kw)


def run_setting(preset: SettingPreset, procedures=PROCEDURES, alpha=0.1, reps=100, seed=0,
                grid_indices=None, m=None, n_jobs=1, fit_overrides=None) -> ExperimentReport:
    """Simulate ``reps`` datasets per grid point and score every procedure."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    procedures = tuple(procedures)
    for name in procedures:
        if name not in PROCEDURES:
            raise ValueError(f"unknown procedure {name!r}")
    if grid_indices is None:
        grid_indices = range(len(preset.grid))
    m = preset.m if m is None else m
    jobs = [(preset, gi, rep, procedures, alpha, seed, m, fit_overrides)
            for gi in grid_indices for rep in range(reps)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            chunks = list(ex.map(_run_cell, jobs))
    else:
        chunks = [_run_cell(j) for j in jobs]
    report = ExperimentReport(setting=preset.to_dict(), alpha=alpha, reps=reps, seed=seed)
    for rows in chunks:
        report.rows.extend(rows)
    return report


def mfdr_curve(stat_sets, truth_sets, cutoffs):
    """Monte Carlo mFDR of ``{stat < c}`` over repetitions with delta-method SEs.

    mFDR(c) = sum_r V_r(c) / sum_r R_r(c).
    """
    cutoffs = np.asarray(cutoffs, dtype=float)
    V = np.array([[np.sum((s < c) & (t == 0)) for c in cutoffs]
                  for s, t in zip(stat_sets, truth_sets)], dtype=float)
    R = np.array([[np.sum(s < c) for c in cutoffs] for s in stat_sets], dtype=float)
    n = len(V)
    Rs = R.sum(axis=0)
    est = np.where(Rs > 0, V.sum(axis=0) / np.maximum(Rs, 1), 0.0)
    resid = V - est * R
    se = np.where(Rs > 0, np.sqrt(n / max(n - 1, 1) * (resid ** 2).sum(axis=0)) / np.maximum(Rs, 1), 0.0)
    return est, se


# ---------------------------------------------------------------------------
# ranking sensitivity

def associated_set(causal, window, m, include_causal=True):
    """0-based indices within ``window`` of any causal index, clipped to range."""
    causal = np.asarray(sorted(set(int(c) for c in causal)))
    if not len(causal):
        raise ValueError("empty causal set")
    if np.any(causal < 0) or np.any(causal >= m):
        raise ValueError("causal index out of range")
    if window < 0:
        raise ValueError("window must be >= 0")
    mask = np.zeros(m, dtype=bool)
    for c in causal:
        mask[max(c - window, 0):min(c + window, m - 1) + 1] = True
    if not include_causal:
        mask[causal] = False
    return np.flatnonzero(mask)


def sensitivity_topk(ranking_stat, causal, window, k_grid, include_causal=True):
    """Fraction of associated positions among the ``k`` smallest statistics.

    Indices are 0-based; ties in the ranking are broken by position.
    """
    stat = np.asarray(ranking_stat, dtype=float)
    m = len(stat)
    assoc = associated_set(causal, window, m, include_causal)
    if not len(assoc):
        raise ValueError("associated set is empty")
    is_assoc = np.zeros(m, dtype=bool)
    is_assoc[assoc] = True
    hits = np.cumsum(is_assoc[np.argsort(stat, kind="stable")])
    ks = np.asarray(k_grid, dtype=int)
    if np.any(ks < 0) or np.any(ks > m):
        raise ValueError("k outside 0..m")
    return np.where(ks > 0, hits[np.maximum(ks - 1, 0)], 0) / len(assoc)

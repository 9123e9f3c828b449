"""HHMM parameters, datasets, simulation and the complete-data likelihood.

Region labels are 1-based in :class:`Dataset` (``eta`` in ``1..K``) and
0-based everywhere else, including array axes of :class:`ModelParams`.
Array layouts:

* ``pi[k]``       initial region probabilities
* ``c[p, k]``     Pr(theta_1 = p | eta_1 = k)
* ``A[k, p, q]``  Pr(theta_{i+1} = q | theta_i = p, eta_{i+1} = k)
* ``B[k, l]``     region transition used only when leaving a block end
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .densities import StandardNormal, TINY, density_from_dict

SUM_TOL = 1e-12


def _frozen(a, ndim):
    a = np.array(a, dtype=float)
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModelParams:
    K: int
    S: int
    pi: np.ndarray
    c: np.ndarray
    A: np.ndarray
    B: np.ndarray
    f0: object = field(default_factory=StandardNormal)
    f1: object = field(default_factory=StandardNormal)

    def __post_init__(self):
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "S", int(self.S))
        object.__setattr__(self, "pi", _frozen(self.pi, 1))
        object.__setattr__(self, "c", _frozen(self.c, 2))
        object.__setattr__(self, "A", _frozen(self.A, 3))
        object.__setattr__(self, "B", _frozen(self.B, 2))

    @property
    def densities(self):
        return (self.f0, self.f1)

    def replace(self, **changes):
        fields = dict(K=self.K, S=self.S, pi=self.pi, c=self.c, A=self.A,
                      B=self.B, f0=self.f0, f1=self.f1)
        fields.update(changes)
        return ModelParams(**fields)

    def log_arrays(self):
        """``(log_pi, log_c, log_A, log_B)`` as contiguous float arrays."""
        with np.errstate(divide="ignore"):
            return tuple(np.ascontiguousarray(np.log(a))
                         for a in (self.pi, self.c, self.A, self.B))

    def log_emissions(self, z):
        """``(m, 2)`` array of clamped log f_p(z_j)."""
        z = np.asarray(z, dtype=float)
        return np.ascontiguousarray(
            np.column_stack([self.f0.logpdf(z), self.f1.logpdf(z)]))

    def to_dict(self):
        return {"K": self.K, "S": self.S, "pi": self.pi.tolist(),
                "c": self.c.tolist(), "A": self.A.tolist(), "B": self.B.tolist(),
                "f0": self.f0.to_dict(), "f1": self.f1.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(K=d["K"], S=d["S"], pi=d["pi"], c=d["c"], A=d["A"], B=d["B"],
                   f0=density_from_dict(d["f0"]), f1=density_from_dict(d["f1"]))

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_params(p: ModelParams) -> ValidationReport:
    """Check shapes, ranges and normalization; never raises."""
    bad = []
    K, S = p.K, p.S
    if K < 1:
        bad.append(f"K must be >= 1 (got {K})")
    if S < 1:
        bad.append(f"S must be >= 1 (got {S})")
    shapes = {"pi": (p.pi, (K,)), "c": (p.c, (2, K)), "A": (p.A, (K, 2, 2)),
              "B": (p.B, (K, K))}
    for name, (arr, shape) in shapes.items():
        if arr.shape != shape:
            bad.append(f"{name} has shape {arr.shape}, expected {shape}")
    if bad:
        return ValidationReport(tuple(bad))
    for name, (arr, _) in shapes.items():
        if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
            bad.append(f"{name} has entries outside [0, 1]")
    if abs(p.pi.sum() - 1.0) > SUM_TOL:
        bad.append(f"pi not normalized (sums to {p.pi.sum():.12g})")
    for k in range(K):
        s = p.c[:, k].sum()
        if abs(s - 1.0) > SUM_TOL:
            bad.append(f"c column {k} not normalized (sums to {s:.12g})")
        for r in range(2):
            s = p.A[k, r].sum()
            if abs(s - 1.0) > SUM_TOL:
                bad.append(f"row not stochastic: A[{k}] row {r} sums to {s:.12g}")
        s = p.B[k].sum()
        if abs(s - 1.0) > SUM_TOL:
            bad.append(f"row not stochastic: B row {k} sums to {s:.12g}")
    return ValidationReport(tuple(bad))


def require_valid(p):
    report = validate_params(p)
    if not report.ok:
        raise ValueError("invalid parameters: " + "; ".join(report.violations))


def block_indicator(j, S):
    """0 when position ``j`` (1-based) closes a block, else 1."""
    if j < 1 or S < 1:
        raise ValueError("need j >= 1 and S >= 1")
    return 0 if j % S == 0 else 1


def boundary_mask(m, S):
    """Boolean array over transitions ``t -> t+1`` (0-based ``t < m-1``) using B."""
    return (np.arange(1, m) % S) == 0


def mixture_density(p: ModelParams, state, z):
    if state not in (0, 1):
        raise ValueError("state must be 0 or 1")
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite z")
    return p.densities[state].pdf(z)


# ---------------------------------------------------------------------------
# datasets

@dataclass(frozen=True)
class Dataset:
    z: np.ndarray
    theta: np.ndarray | None = None
    eta: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        if z.ndim != 1 or len(z) < 1:
            raise ValueError("z must be a non-empty 1-d sequence")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        for name in ("theta", "eta"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.array(v, dtype=np.int64)
            if v.shape != z.shape:
                raise ValueError(f"{name} length {len(v)} != m = {len(z)}")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if self.theta is not None and not np.all((self.theta == 0) | (self.theta == 1)):
            raise ValueError("theta values must be 0 or 1")
        if self.eta is not None and np.any(self.eta < 1):
            raise ValueError("eta values must be in 1..K")

    @property
    def m(self):
        return len(self.z)

    def check_blocks(self, S):
        """True when eta only changes right after multiples of ``S``."""
        if self.eta is None:
            return True
        change = np.flatnonzero(np.diff(self.eta)) + 1  # 1-based i with eta_{i+1} != eta_i
        return bool(np.all(change % S == 0))

    def to_dict(self):
        d = {"z": self.z.tolist(), "meta": dict(self.meta)}
        if self.theta is not None:
            d["theta"] = self.theta.tolist()
        if self.eta is not None:
            d["eta"] = self.eta.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(z=d["z"], theta=d.get("theta"), eta=d.get("eta"),
                   meta=d.get("meta", {}))

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_tsv(self):
        cols = ["index", "z"]
        if self.theta is not None:
            cols.append("theta")
        if self.eta is not None:
            cols.append("eta")
        out = io.StringIO()
        out.write("\t".join(cols) + "\n")
        for i in range(self.m):
            row = [str(i + 1), repr(float(self.z[i]))]
            if self.theta is not None:
                row.append(str(int(self.theta[i])))
            if self.eta is not None:
                row.append(str(int(self.eta[i])))
            out.write("\t".join(row) + "\n")
        return out.getvalue()

    @classmethod
    def from_tsv(cls, text, meta=None):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty TSV")
        header = lines[0].split("\t")
        if header[:2] != ["index", "z"]:
            raise ValueError("TSV header must start with index<TAB>z")
        rows = [ln.split("\t") for ln in lines[1:]]
        if not rows:
            raise ValueError("TSV has no data rows")
        cols = {name: [r[i] for r in rows] for i, name in enumerate(header)}
        z = [float(v) for v in cols["z"]]
        theta = [int(v) for v in cols["theta"]] if "theta" in cols else None
        eta = [int(v) for v in cols["eta"]] if "eta" in cols else None
        return cls(z=z, theta=theta, eta=eta, meta=dict(meta or {}))


# ---------------------------------------------------------------------------
# simulation and complete-data likelihood

def simulate_dataset(p: ModelParams, m: int, rng_seed: int, meta=None) -> Dataset:
    """Draw ``(theta, eta, z)`` of length ``m`` from the HHMM."""
    require_valid(p)
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(rng_seed)
    K, S = p.K, p.S
    n_blocks = -(-m // S)
    block_eta = np.empty(n_blocks, dtype=np.int64)
    block_eta[0] = rng.choice(K, p=p.pi)
    for b in range(1, n_blocks):
        block_eta[b] = rng.choice(K, p=p.B[block_eta[b - 1]])
    eta = np.repeat(block_eta, S)[:m]

    u = rng.random(m)
    theta = np.empty(m, dtype=np.int64)
    theta[0] = int(u[0] < p.c[1, eta[0]])
    # Pr(theta_{i+1} = 1 | theta_i, eta_{i+1})
    p_one = p.A[:, :, 1]
    for i in range(1, m):
        theta[i] = int(u[i] < p_one[eta[i], theta[i - 1]])

    z = np.empty(m)
    null = theta == 0
    z[null] = p.f0.sample(rng, int(null.sum()))
    z[~null] = p.f1.sample(rng, int((~null).sum()))
    return Dataset(z=z, theta=theta, eta=eta + 1, meta=dict(meta or {}))


def complete_log_likelihood(p: ModelParams, d: Dataset) -> float:
    """log L(params; theta, eta, z) for fully observed hidden paths."""
    if d.theta is None or d.eta is None:
        raise ValueError("complete likelihood needs theta and eta")
    require_valid(p)
    theta, eta = d.theta, d.eta - 1
    if np.any(eta >= p.K):
        raise ValueError("eta exceeds K")
    logs = p.log_arrays()
    log_pi, log_c, log_A, log_B = logs
    total = log_pi[eta[0]] + log_c[theta[0], eta[0]]
    if d.m > 1:
        bnd = boundary_mask(d.m, p.S)
        k, l = eta[:-1], eta[1:]
        if np.any(k[~bnd] != l[~bnd]):
            return -np.inf
        total += log_B[k[bnd], l[bnd]].sum()
        total += log_A[l, theta[:-1], theta[1:]].sum()
    le = p.log_emissions(d.z)
    total += le[np.arange(d.m), theta].sum()
    return float(total)

"""Independent reference implementations used as test oracles.

Nothing here calls into the recursions under test.  The enumeration oracle
sums the factored joint probability over every (theta, eta) path, including
those the block constraint forbids (which receive probability zero).
"""

import itertools

import numpy as np

from hlis.densities import GaussianMixture, StandardNormal, normal
from hlis.model import ModelParams


def rand_simplex(rng, *shape):
    x = rng.gamma(1.0, size=shape) + 1e-3
    return x / x.sum(axis=-1, keepdims=True)


def random_params(rng, K, S, mixture=False):
    c = rand_simplex(rng, K, 2).T
    if mixture:
        f1 = GaussianMixture(weights=rand_simplex(rng, 2), means=rng.uniform(0.5, 3, 2),
                             sds=rng.uniform(0.6, 1.5, 2))
    else:
        f1 = normal(rng.uniform(0.5, 3.0), rng.uniform(0.6, 1.5))
    return ModelParams(K=K, S=S, pi=rand_simplex(rng, K), c=c, A=rand_simplex(rng, K, 2, 2),
                       B=rand_simplex(rng, K, K), f0=StandardNormal(), f1=f1)


def _npdf(z, mu, sd):
    return np.exp(-0.5 * ((z - mu) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))


def enumerate_posteriors(p, z):
    """Exact posteriors by summing over all 2^m * K^m hidden paths."""
    z = np.asarray(z, dtype=float)
    m, K, S = len(z), p.K, p.S
    th = np.array(list(itertools.product((0, 1), repeat=m)))
    et = np.array(list(itertools.product(range(K), repeat=m)))
    f = np.stack([p.f0.pdf(z), p.f1.pdf(z)])  # (2, m)
    with np.errstate(divide="ignore"):
        lA, lB, lc, lpi, lf = (np.log(x) for x in (p.A, p.B, p.c, p.pi, f))
    emis = lf[th, np.arange(m)].sum(axis=1)  # (nt,)
    logj = emis[:, None] + lpi[et[:, 0]][None, :] + lc[th[:, 0][:, None], et[:, 0][None, :]]
    for j in range(m - 1):
        # position j+1 (1-based) is a boundary when it is a multiple of S
        if (j + 1) % S == 0:
            logj = logj + lB[et[:, j], et[:, j + 1]][None, :]
        else:
            same = et[:, j] == et[:, j + 1]
            logj = logj + np.where(same, 0.0, -np.inf)[None, :]
        logj = logj + lA[et[:, j + 1][None, :], th[:, j][:, None], th[:, j + 1][:, None]]
    top = logj.max()
    w = np.exp(logj - top)
    total = w.sum()
    log_ev = top + np.log(total)
    w /= total

    gamma = np.zeros((m, 2))
    region = np.zeros((m, K))
    for j in range(m):
        for q in (0, 1):
            gamma[j, q] = w[th[:, j] == q].sum()
        for k in range(K):
            region[j, k] = w[:, et[:, j] == k].sum()
    rho1 = np.zeros((2, K))
    for q in (0, 1):
        for k in range(K):
            rho1[q, k] = w[th[:, 0] == q][:, et[:, 0] == k].sum()
    xi = np.zeros((max(m - 1, 0), 2, 2, K, K))
    for j in range(m - 1):
        for a, b in itertools.product((0, 1), repeat=2):
            rows = w[(th[:, j] == a) & (th[:, j + 1] == b)].sum(axis=0)
            for k, l in itertools.product(range(K), repeat=2):
                xi[j, a, b, k, l] = rows[(et[:, j] == k) & (et[:, j + 1] == l)].sum()
    nu = xi.sum(axis=(1, 2))
    zeta = xi.sum(axis=3)
    bnd = (np.arange(1, m) % S) == 0
    return dict(gamma=gamma, hlis=gamma[:, 0], region=region, rho1=rho1, phi1=rho1.sum(0),
                xi=xi, nu=nu, zeta=zeta, zeta_sum=zeta.sum(0), nu_boundary_sum=nu[bnd].sum(0),
                log_evidence=log_ev)


# ---------------------------------------------------------------------------
# plain two-state HMM, scaled (non-log) recursions

def hmm_forward_backward(init, trans, emis):
    """Return (gamma, xi, loglik) for a 2-state HMM with emission matrix (m, 2)."""
    m = len(emis)
    alpha = np.zeros((m, 2))
    scale = np.zeros(m)
    a = init * emis[0]
    scale[0] = a.sum()
    alpha[0] = a / scale[0]
    for t in range(1, m):
        a = (alpha[t - 1] @ trans) * emis[t]
        scale[t] = a.sum()
        alpha[t] = a / scale[t]
    beta = np.ones((m, 2))
    for t in range(m - 2, -1, -1):
        beta[t] = trans @ (emis[t + 1] * beta[t + 1]) / scale[t + 1]
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    xi = np.zeros((m - 1, 2, 2))
    for t in range(m - 1):
        x = alpha[t][:, None] * trans * (emis[t + 1] * beta[t + 1])[None, :]
        xi[t] = x / x.sum()
    return gamma, xi, float(np.log(scale).sum())


def plain_lis(p, z):
    """Pr(theta_j = 0 | z) for a K=1 parameter set, via the plain HMM."""
    emis = np.column_stack([p.f0.pdf(z), p.f1.pdf(z)])
    gamma, _, _ = hmm_forward_backward(p.c[:, 0], p.A[0], emis)
    return gamma[:, 0]


def kde_loop(points, weights, h, queries):
    """Normalized weighted Gaussian KDE written as a double loop."""
    tot = float(sum(weights))
    out = []
    for x in queries:
        s = 0.0
        for y, w in zip(points, weights):
            u = (x - y) / h
            s += w * np.exp(-0.5 * u * u)
        out.append(s / (tot * h * np.sqrt(2 * np.pi)))
    return np.array(out)


def plain_baum_welch(z, init_params, h, iters):
    """Baum-Welch for a 2-state HMM with f0 = N(0, 1) and a fixed-bandwidth kernel f1.

    Mirrors the fitting rules: a kernel step that lowers the likelihood is
    replaced by a transition-only step; a second decrease stops the run.
    Returns the log-likelihood trace.
    """
    z = np.asarray(z, dtype=float)
    init = init_params.c[:, 0].copy()
    trans = init_params.A[0].copy()
    f1 = init_params.f1.pdf(z)
    f0 = _npdf(z, 0.0, 1.0)

    def e_step(init, trans, f1):
        return hmm_forward_backward(init, trans, np.column_stack([f0, f1]))

    gamma, xi, ll = e_step(init, trans, f1)
    trace = [ll]
    diff = (z[:, None] - z[None, :]) / h
    kern = np.exp(-0.5 * diff * diff) / (h * np.sqrt(2 * np.pi))
    for _ in range(iters):
        new_init = gamma[0]
        xs = xi.sum(axis=0)
        new_trans = xs / xs.sum(axis=1, keepdims=True)
        w = gamma[:, 1]
        new_f1 = kern @ (w / w.sum())
        g, x, nll = e_step(new_init, new_trans, new_f1)
        if not nll >= ll:
            new_f1 = f1
            g, x, nll = e_step(new_init, new_trans, f1)
            if not nll >= ll:
                break
        gain = (nll - ll) / abs(ll)
        init, trans, f1, gamma, xi, ll = new_init, new_trans, new_f1, g, x, nll
        trace.append(ll)
        if gain < 1e-6:
            break
    return np.array(trace)

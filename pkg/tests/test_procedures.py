import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hlis import (FitConfig, ModelParams, bh_procedure, get_setting, hlis_data_driven_procedure,
                  hlis_oracle_procedure, lfdr_procedure, lis_procedure, simulate_dataset,
                  step_up_select)
from hlis.densities import StandardNormal, normal
from hlis.procedures import DecisionResult, bh_from_pvalues, two_sided_pvalues

from _oracles import enumerate_posteriors, random_params


def test_step_up_worked_example():
    d = step_up_select([0.01, 0.03, 0.2, 0.5], 0.1)
    assert d.l == 3
    assert d.reject.tolist() == [True, True, True, False]
    assert d.cutoff_interval == (0.2, 0.5)


def test_step_up_extremes():
    assert step_up_select([0.5, 0.6, 0.9], 0.1).l == 0
    assert step_up_select(np.zeros(7), 0.1).l == 7
    assert step_up_select(np.zeros(7), 0.0).l == 0


def test_step_up_unsorted_input():
    d = step_up_select([0.5, 0.01, 0.2, 0.03], 0.1)
    assert d.reject.tolist() == [False, True, True, True]


def test_step_up_validates():
    with pytest.raises(ValueError):
        step_up_select([0.1, 1.5], 0.1)
    with pytest.raises(ValueError):
        step_up_select([0.1], 1.5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.floats(0.001, 0.5))
def test_step_up_is_maximal_prefix(stats, alpha):
    d = step_up_select(stats, alpha)
    srt = np.sort(stats)
    means = np.cumsum(srt) / np.arange(1, len(srt) + 1)
    ok = [k for k in range(1, len(srt) + 1) if means[k - 1] <= alpha]
    assert d.l == (max(ok) if ok else 0)
    assert d.reject.sum() == d.l
    if d.l:
        assert np.mean(np.asarray(stats)[d.reject]) <= alpha + 1e-15


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.floats(0.01, 0.3),
       st.floats(0.01, 0.3))
def test_step_up_monotone_in_alpha(stats, a1, a2):
    lo, hi = sorted((a1, a2))
    assert step_up_select(stats, lo).l <= step_up_select(stats, hi).l


def test_bh_worked_example():
    d = bh_from_pvalues([0.001, 0.02, 0.03, 0.5], 0.1)
    assert d.l == 3


def test_bh_null_z():
    d = bh_procedure(np.zeros(20), 0.1)
    np.testing.assert_allclose(d.stat, 1.0)
    assert d.l == 0


def test_pvalues_two_sided():
    np.testing.assert_allclose(two_sided_pvalues([1.959963984540054, -1.959963984540054]),
                               0.05, rtol=1e-12)


def test_oracle_symmetric_rejects_none():
    K = 2
    p = ModelParams(K=K, S=3, pi=[0.5, 0.5], c=np.full((2, K), 0.5), A=np.full((K, 2, 2), 0.5),
                    B=[[0.5, 0.5], [0.5, 0.5]], f0=StandardNormal(), f1=StandardNormal())
    assert hlis_oracle_procedure(p, np.linspace(-2, 2, 30), 0.1).l == 0


def test_oracle_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(10):
        p = random_params(rng, 2, 2)
        z = rng.normal(1.5, 1.5, 6)
        ref = step_up_select(enumerate_posteriors(p, z)["hlis"], 0.3)
        got = hlis_oracle_procedure(p, z, 0.3)
        assert got.reject.tolist() == ref.reject.tolist()


@pytest.fixture(scope="module")
def sim():
    p = get_setting(1).params(5)
    return p, simulate_dataset(p, 1800, 12)


def test_data_driven_alpha_zero(sim):
    _, d = sim
    dec, fit = hlis_data_driven_procedure(d.z, 2, 30, 0.0, FitConfig(restarts=1, max_iters=5))
    assert dec.l == 0


def test_lis_is_k1_data_driven(sim):
    _, d = sim
    cfg = FitConfig(restarts=2, fix_null_density=True, seed=4)
    a = lis_procedure(d.z, 0.1, cfg)
    b, _ = hlis_data_driven_procedure(d.z, 1, 1, 0.1, cfg)
    np.testing.assert_array_equal(a.stat, b.stat)
    assert a.procedure == "lis"


def test_lfdr_symmetric():
    rng = np.random.default_rng(1)
    z = rng.normal(size=200)
    p0 = 0.5
    lfdr = p0 * normal(0).pdf(z) / (p0 * normal(0).pdf(z) + (1 - p0) * normal(0).pdf(z))
    assert step_up_select(lfdr, 0.1).l == 0


def test_lfdr_and_hlis_agree_on_iid_data():
    rng = np.random.default_rng(2)
    m = 3000
    theta = rng.random(m) < 0.2
    z = np.where(theta, rng.normal(2.5, 1, m), rng.normal(0, 1, m))
    cfg = FitConfig(restarts=2, fix_null_density=True, seed=2)
    a = lfdr_procedure(z, 0.1, cfg)
    b, _ = hlis_data_driven_procedure(z, 2, 30, 0.1, cfg)
    assert np.mean(a.reject == b.reject) > 0.95


def test_decision_serialization(sim):
    _, d = sim
    dec = bh_procedure(d.z, 0.1)
    lines = dec.to_tsv().splitlines()
    assert lines[0] == "index\tstat\treject" and len(lines) == d.m + 1
    assert isinstance(dec, DecisionResult) and '"procedure": "bh"' in dec.to_json()

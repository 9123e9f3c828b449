import dataclasses

import numpy as np
import pytest

from hlis import (FitConfig, FitResult, ModelParams, bic_select_K, compute_posteriors, em_fit,
                  get_setting, m_step_update, simulate_dataset, validate_params)
from hlis.densities import StandardNormal, WeightedKernel
from hlis.em import EmptyClassError, TwoGroupFit, fit_two_group, initial_params, n_free_params

from _oracles import enumerate_posteriors, plain_baum_welch, random_params


@pytest.fixture(scope="module")
def small_data():
    return simulate_dataset(get_setting(1).params(5), 900, 21)


def test_pi_copies_phi1():
    rng = np.random.default_rng(0)
    p = random_params(rng, 2, 2)
    b = compute_posteriors(p, rng.normal(size=6))
    b = dataclasses.replace(b, phi1=np.array([0.3, 0.7]))
    new = m_step_update(b, rng.normal(size=6), 2, FitConfig(), previous=p,
                        update_densities=False)
    np.testing.assert_array_equal(new.pi, [0.3, 0.7])


def test_m_step_hand_ratios():
    rng = np.random.default_rng(1)
    p = random_params(rng, 2, 2)
    z = rng.normal(1, 1, 4)
    ref = enumerate_posteriors(p, z)
    new = m_step_update(compute_posteriors(p, z), z, 2, FitConfig(bandwidth=0.5), previous=p)
    np.testing.assert_allclose(new.pi, ref["phi1"], atol=1e-10)
    np.testing.assert_allclose(new.c, ref["rho1"] / ref["rho1"].sum(0), atol=1e-10)
    zs = ref["zeta_sum"]  # (p, q, l)
    for k in range(2):
        np.testing.assert_allclose(new.A[k], zs[:, :, k] / zs[:, :, k].sum(1, keepdims=True),
                                   atol=1e-10)
    # only the boundary after position 2 contributes to B
    nb = ref["nu"][1]
    np.testing.assert_allclose(new.B, nb / nb.sum(1, keepdims=True), atol=1e-10)
    w = ref["gamma"][:, 1]
    q = np.linspace(-2, 4, 9)
    dens = (np.exp(-0.5 * ((q[:, None] - z[None, :]) / 0.5) ** 2) @ (w / w.sum())
            / (0.5 * np.sqrt(2 * np.pi)))
    np.testing.assert_allclose(new.f1.pdf(q), dens, atol=1e-10)


def test_k1_transition_update_is_baum_welch():
    rng = np.random.default_rng(2)
    p = random_params(rng, 1, 1)
    z = rng.normal(1, 1.5, 5)
    ref = enumerate_posteriors(p, z)
    xi = ref["xi"][:, :, :, 0, 0].sum(0)
    new = m_step_update(compute_posteriors(p, z), z, 1, FitConfig(), previous=p,
                        update_densities=False)
    np.testing.assert_allclose(new.A[0], xi / xi.sum(1, keepdims=True), atol=1e-10)


def test_empty_class_without_previous():
    rng = np.random.default_rng(3)
    p = random_params(rng, 2, 2)
    z = rng.normal(size=6)
    b = compute_posteriors(p, z)
    b = dataclasses.replace(b, nu_boundary_sum=np.array([[0.0, 0.0], [0.4, 0.6]]))
    with pytest.raises(EmptyClassError):
        m_step_update(b, z, 2, FitConfig(), update_densities=False)
    notes = []
    new = m_step_update(b, z, 2, FitConfig(), previous=p, notes=notes, update_densities=False)
    np.testing.assert_array_equal(new.B[0], p.B[0])
    assert any("kept previous" in n for n in notes)


def test_k1_trajectory_matches_plain_baum_welch(small_data):
    cfg = FitConfig(restarts=1, bandwidth=0.4, fix_null_density=True, seed=3)
    z = small_data.z[:400]
    fit = em_fit(z, 1, 30, cfg)
    init = initial_params(1, 30, np.random.default_rng([3, 0]))
    ref = plain_baum_welch(z, init, 0.4, cfg.max_iters)
    assert len(fit.trace) == len(ref)
    np.testing.assert_allclose(fit.trace, ref, rtol=0, atol=1e-10)


def test_em_monotone_and_deterministic(small_data):
    cfg = FitConfig(restarts=2, fix_null_density=True, seed=5)
    a = em_fit(small_data.z, 2, 30, cfg)
    b = em_fit(small_data.z, 2, 30, cfg)
    assert np.all(np.diff(a.trace) >= -1e-8)
    assert a.trace[-1] >= a.trace[0]
    assert a.to_json() == b.to_json()
    assert len(a.restart_loglik) == 2
    assert a.log_likelihood == max(a.restart_loglik)


def test_em_monotone_free_null(small_data):
    fit = em_fit(small_data.z, 2, 30, FitConfig(restarts=1, seed=1))
    assert np.all(np.diff(fit.trace) >= -1e-8)
    assert isinstance(fit.params.f0, WeightedKernel)


def test_fit_result_round_trip(small_data):
    fit = em_fit(small_data.z[:300], 2, 30, FitConfig(restarts=1, max_iters=5))
    back = FitResult.from_dict(fit.to_dict())
    assert back.to_json() == fit.to_json()
    z = np.linspace(-2, 4, 5)
    np.testing.assert_array_equal(back.params.f1.pdf(z), fit.params.f1.pdf(z))


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig(restarts=0)
    cfg = FitConfig(bandwidth=0.3)
    assert FitConfig.from_dict(cfg.to_dict()) == cfg
    assert FitConfig().bandwidth_rule == "silverman"


def test_degenerate_data_reports_failure():
    fit = em_fit(np.full(50, 1.5), 2, 5, FitConfig(restarts=1))
    assert fit.message.startswith("fit failed")
    assert not fit.converged


def test_input_validation():
    with pytest.raises(ValueError):
        em_fit([1.0], 1, 1)
    with pytest.raises(ValueError):
        em_fit([1.0, np.inf], 1, 1)


def test_free_parameter_count():
    assert [n_free_params(k) for k in (1, 2, 3)] == [3, 9, 17]


def test_bic_single_candidate(small_data):
    best, table, fits = bic_select_K(small_data.z, 30, [2], FitConfig(restarts=1, max_iters=5))
    assert best == 2 and len(table) == 1 and set(fits) == {2}


def test_bic_table_rows(small_data):
    cfg = FitConfig(restarts=1, max_iters=20, fix_null_density=True)
    best, table, _ = bic_select_K(small_data.z, 30, [1, 2, 3], cfg)
    assert [r["K"] for r in table] == [1, 2, 3]
    assert best in (1, 2, 3)
    assert best == min(table, key=lambda r: (r["bic"], r["K"]))["K"]


def test_two_group_symmetric():
    f = StandardNormal()
    fit = TwoGroupFit(p0=0.5, f0=f, f1=f, trace=(), converged=True, iterations=0)
    np.testing.assert_allclose(fit.lfdr(np.linspace(-3, 3, 11)), 0.5)


def test_two_group_recovers_proportion():
    rng = np.random.default_rng(8)
    z = np.concatenate([rng.normal(size=1600), rng.normal(3, 1, 400)])
    fit = fit_two_group(z, FitConfig())
    assert abs(fit.p0 - 0.8) < 0.05
    assert np.all(np.diff(fit.trace) >= -1e-8)


def test_initial_params_valid():
    for K in (1, 2, 3):
        p = initial_params(K, 30, np.random.default_rng(K))
        assert isinstance(p, ModelParams)
        assert validate_params(p).ok

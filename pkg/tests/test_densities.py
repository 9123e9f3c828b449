import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from hlis.densities import (GaussianMixture, StandardNormal, WeightedKernel, binned_kernel_sum,
                            density_from_dict, kernel_sum, normal, silverman_bandwidth,
                            simulation_alternative, weighted_kde)

from _oracles import kde_loop


def test_single_point_peak():
    h = 0.3
    val = weighted_kde([1.7], [1.0], h, [1.7])[0]
    assert val == pytest.approx(1 / (h * np.sqrt(2 * np.pi)), rel=1e-15)


def test_equal_weights_is_unweighted():
    rng = np.random.default_rng(0)
    x = rng.normal(size=40)
    q = np.linspace(-3, 3, 25)
    h = 0.4
    plain = np.exp(-0.5 * ((q[:, None] - x[None, :]) / h) ** 2).mean(1) / (h * np.sqrt(2 * np.pi))
    np.testing.assert_allclose(weighted_kde(x, np.full(40, 3.0), h, q), plain, rtol=1e-13)


def test_matches_double_loop():
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.normal(0, 2, 50)
        w = rng.random(50)
        q = rng.uniform(-5, 5, 20)
        h = rng.uniform(0.1, 1.0)
        np.testing.assert_allclose(weighted_kde(x, w, h, q), kde_loop(x, w, h, q),
                                   rtol=0, atol=1e-12)


def test_integrates_to_one():
    rng = np.random.default_rng(2)
    x = rng.normal(size=30)
    w = rng.random(30)
    h = silverman_bandwidth(x, w)
    total, _ = quad(lambda t: weighted_kde(x, w, h, [t])[0], -np.inf, np.inf, limit=200)
    assert abs(total - 1) < 1e-4


def test_invalid_inputs():
    with pytest.raises(ValueError):
        weighted_kde([0.0], [1.0], 0.0, [0.0])
    with pytest.raises(ValueError):
        weighted_kde([0.0, 1.0], [0.0, 0.0], 0.5, [0.0])
    with pytest.raises(ValueError):
        weighted_kde([0.0, 1.0], [-1.0, 2.0], 0.5, [0.0])


def test_binned_sum_accuracy():
    rng = np.random.default_rng(3)
    x = rng.normal(1, 1.5, 3000)
    w = rng.random(3000)
    w /= w.sum()
    q = rng.uniform(-4, 6, 500)
    h = silverman_bandwidth(x, w)
    direct = np.exp(-0.5 * ((q[:, None] - x[None, :]) / h) ** 2) @ w / (h * np.sqrt(2 * np.pi))
    err = np.max(np.abs(binned_kernel_sum(x, w, h, q) - direct))
    assert err < 1e-6


def test_kernel_sum_dispatch_consistent():
    rng = np.random.default_rng(4)
    x = rng.normal(size=2500)
    w = np.full(2500, 1 / 2500)
    q = rng.normal(size=2000)  # above the direct limit
    h = 0.3
    direct = np.exp(-0.5 * ((q[:, None] - x[None, :]) / h) ** 2) @ w / (h * np.sqrt(2 * np.pi))
    assert np.max(np.abs(kernel_sum(x, w, h, q) - direct)) < 1e-6


def test_silverman_unweighted_value():
    rng = np.random.default_rng(5)
    x = rng.normal(size=500)
    w = np.ones(500)
    sd = x.std()
    h = silverman_bandwidth(x, w)
    assert 0 < h <= 0.9 * sd * 500 ** -0.2 + 1e-12


def test_silverman_zero_spread():
    with pytest.raises(ValueError):
        silverman_bandwidth(np.ones(10), np.ones(10))


def test_standard_normal():
    f = StandardNormal()
    assert f.pdf(np.array([0.0]))[0] == pytest.approx(0.3989422804014327, rel=1e-15)
    assert np.isfinite(f.logpdf(np.array([1e4]))).all()


def test_simulation_alternative_forms():
    assert isinstance(simulation_alternative(1.0, 1.5), type(normal(0)))
    g = simulation_alternative(0.3, 1.0)
    z = np.array([0.5, 2.0])
    want = 0.3 * normal(1.0).pdf(z) + 0.7 * normal(2.0).pdf(z)
    np.testing.assert_allclose(g.pdf(z), want, rtol=1e-14)


def test_density_dict_round_trip():
    rng = np.random.default_rng(6)
    dens = [StandardNormal(), normal(1.0, 2.0), GaussianMixture([0.2, 0.8], [0, 2], [1, 0.5]),
            WeightedKernel(rng.normal(size=20), np.full(20, 0.05), 0.4)]
    z = np.linspace(-3, 3, 7)
    for d in dens:
        back = density_from_dict(d.to_dict())
        np.testing.assert_array_equal(back.pdf(z), d.pdf(z))


def test_mixture_sampling_moments():
    g = GaussianMixture([0.5, 0.5], [-1.0, 3.0], [1.0, 1.0])
    s = g.sample(np.random.default_rng(7), 200_000)
    assert abs(s.mean() - 1.0) < 0.02


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30),
       st.floats(0.05, 3.0), st.integers(0, 1000))
def test_kde_nonnegative_and_bounded(pts, h, seed):
    w = np.random.default_rng(seed).random(len(pts)) + 1e-3
    q = np.linspace(-12, 12, 31)
    v = weighted_kde(pts, w, h, q)
    assert np.all(v >= 0)
    assert np.all(v <= 1 / (h * np.sqrt(2 * np.pi)) * (1 + 1e-12))

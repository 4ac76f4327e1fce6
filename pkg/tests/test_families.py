import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

import oracles
from lrpi import families as fam
from lrpi.errors import (DegenerateDataError, FitError, NoFailuresError, ParameterDomainError,
                         SupportError)

POINTS = {
    "normal": ({}, {"mu": 0.3, "sigma": 1.7}),
    "normal_known_sigma": ({"sigma": 2.0}, {"mu": -1.0}),
    "exponential": ({}, {"theta": 2.5}),
    "two_param_exponential": ({}, {"mu": 1.0, "beta": 0.7}),
    "uniform": ({}, {"theta": 3.0}),
    "gamma": ({}, {"alpha": 2.5, "beta": 0.8}),
    "weibull": ({}, {"beta": 1.7, "eta": 2.0}),
    "generalized_gamma": ({}, {"mu": 0.2, "sigma": 0.6, "lam": 1.3}),
}


def spec_params(name):
    hyper, p = POINTS[name]
    return fam.family_spec(name, **hyper), p


# --- examples ---------------------------------------------------------------


def test_log_density_examples():
    assert fam.log_density(fam.family_spec("normal"), {"mu": 0, "sigma": 1}, 0.0) == pytest.approx(
        -0.9189385332, abs=1e-9)
    assert fam.log_density(fam.family_spec("exponential"), {"theta": 2}, 2.0) == pytest.approx(
        -1.6931471806, abs=1e-9)
    gg = fam.family_spec("generalized_gamma")
    assert fam.log_density(gg, {"mu": 0, "sigma": 1, "lam": 0}, 1.0) == pytest.approx(
        -0.9189385332, abs=1e-9)


def test_log_density_outside_support_is_minus_inf():
    assert fam.log_density(fam.family_spec("exponential"), {"theta": 1}, -1.0) == -math.inf
    assert fam.log_density(fam.family_spec("uniform"), {"theta": 1}, 1.5) == -math.inf
    assert fam.log_density(fam.family_spec("two_param_exponential"), {"mu": 1, "beta": 1},
                           0.5) == -math.inf


@pytest.mark.parametrize("name", sorted(POINTS))
def test_log_density_matches_scipy(name):
    spec, p = spec_params(name)
    full = dict(p, **POINTS[name][0])
    x = fam.quantile(spec, p, np.linspace(0.01, 0.99, 41))
    np.testing.assert_allclose(fam.log_density(spec, p, x), oracles.LOGPDF[name](x, full),
                               rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("name", sorted(POINTS))
def test_density_integrates_to_one(name):
    spec, p = spec_params(name)
    lo, hi = fam.quantile(spec, p, 1e-13), fam.quantile(spec, p, 1 - 1e-13)
    f = lambda v: math.exp(fam.log_density(spec, p, v))
    total, _ = integrate.quad(f, lo, hi, limit=400, epsabs=1e-12, epsrel=1e-12)
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("name", sorted(POINTS))
def test_cdf_quantile_roundtrip(name):
    spec, p = spec_params(name)
    u = np.linspace(0.001, 0.999, 99)
    np.testing.assert_allclose(fam.cdf(spec, p, fam.quantile(spec, p, u)), u, atol=1e-10)


@pytest.mark.parametrize("name", sorted(POINTS))
def test_sampler_matches_cdf(name):
    spec, p = spec_params(name)
    draws = fam.sample(spec, p, 100_000, seed=2024)
    ks = stats.kstest(draws, lambda v: fam.cdf(spec, p, v)).statistic
    assert ks < 0.01


def test_sample_examples():
    u = fam.sample(fam.family_spec("uniform"), {"theta": 1}, 100_000, seed=1)
    assert 0.495 <= u.mean() <= 0.505
    e = fam.sample(fam.family_spec("exponential"), {"theta": 2}, 100_000, seed=7)
    assert 1.981 <= e.mean() <= 2.019
    n = fam.family_spec("normal")
    assert fam.sample(n, {"mu": 0, "sigma": 1}, 1, 5)[0] == fam.sample(n, {"mu": 0, "sigma": 1}, 1, 5)[0]
    assert fam.sample(n, {"mu": 0, "sigma": 1}, 1, 5)[0] != fam.sample(n, {"mu": 0, "sigma": 1}, 1, 6)[0]


# --- parameter validation -----------------------------------------------------


def test_param_vector_rejects_bad_values():
    with pytest.raises(ParameterDomainError):
        fam.ParamVector("normal", mu=0, sigma=-1)
    with pytest.raises(ParameterDomainError):
        fam.ParamVector("gamma", alpha=0, beta=1)
    with pytest.raises(ParameterDomainError):
        fam.ParamVector("exponential", theta=1, extra=2)
    with pytest.raises(ParameterDomainError):
        fam.family_spec("normal_known_sigma")
    with pytest.raises(ParameterDomainError):
        fam.family_spec("cauchy")


def test_default_varied_parameters():
    expected = {"normal": "mu", "normal_known_sigma": "mu", "exponential": "theta",
                "two_param_exponential": "mu", "uniform": "theta", "gamma": "beta",
                "weibull": "eta", "generalized_gamma": "mu"}
    for name, varied in expected.items():
        spec, _ = spec_params(name)
        assert spec.varied_param == varied


def test_support_violation_is_an_error():
    with pytest.raises(SupportError):
        fam.fit_ml(fam.family_spec("gamma"), [1.0, -2.0, 3.0])


# --- fitting ------------------------------------------------------------------


def test_fit_examples():
    f = fam.fit_ml(fam.family_spec("exponential"), [1, 3])
    assert f.params["theta"] == pytest.approx(2.0)
    f = fam.fit_ml(fam.family_spec("normal"), [-1, 0, 1])
    assert f.params["mu"] == pytest.approx(0.0, abs=1e-15)
    assert f.params["sigma"] == pytest.approx(math.sqrt(2 / 3), rel=1e-12)
    f = fam.fit_ml(fam.family_spec("two_param_exponential"), [1, 2, 4])
    assert (f.params["mu"], f.params["beta"]) == pytest.approx((1.0, 4 / 3))
    assert fam.fit_ml(fam.family_spec("uniform"), [0.2, 1.7, 0.9]).params["theta"] == 1.7


def test_gamma_fit_against_grid_oracle():
    spec = fam.family_spec("gamma")
    x = fam.sample(spec, {"alpha": 2, "beta": 1}, 500, seed=3)
    f = fam.fit_ml(spec, x)
    assert 1.7 <= f.params["alpha"] <= 2.3 and 0.85 <= f.params["beta"] <= 1.18
    ll = lambda la, lb: np.sum(stats.gamma.logpdf(x[:, None, None], np.exp(la), scale=np.exp(lb)),
                               axis=0)
    best = oracles.grid_max_2d(ll, [-1, -1], [2, 1], points=61, rounds=10, shrink=0.2)
    assert f.log_likelihood == pytest.approx(best[0], abs=1e-4)
    assert f.log_likelihood >= best[0] - 1e-9


@pytest.mark.parametrize("name", ["normal", "exponential", "gamma", "weibull", "generalized_gamma"])
def test_fit_matches_general_optimizer(name):
    spec, p = spec_params(name)
    x = fam.sample(spec, p, 40, seed=12)
    f = fam.fit_ml(spec, x)
    ref, _ = oracles.sup_loglik(name, x, POINTS[name][0])
    assert f.log_likelihood == pytest.approx(ref, abs=1e-7)
    direct = float(np.sum(oracles.LOGPDF[name](x, dict(f.params, **POINTS[name][0]))))
    assert f.log_likelihood == pytest.approx(direct, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000),
       name=st.sampled_from(["normal", "exponential", "two_param_exponential", "uniform",
                             "gamma", "weibull", "generalized_gamma"]))
def test_fit_beats_random_perturbations(seed, name):
    spec, p = spec_params(name)
    x = fam.sample(spec, p, 25, seed=seed)
    f = fam.fit_ml(spec, x)
    rng = np.random.default_rng(seed)
    for _ in range(64):
        q = {k: v * math.exp(rng.normal(0, 0.1)) if k in ("sigma", "theta", "beta", "eta", "alpha")
             else v + rng.normal(0, 0.1) for k, v in f.params.items()}
        ll = float(np.sum(oracles.LOGPDF[name](x, dict(q, **POINTS[name][0]))))
        assert ll <= f.log_likelihood + 1e-9


def test_generalized_gamma_boundary_supremum():
    # this sample has no finite MLE (likelihood grows as lam -> inf); the fit is the
    # supremum over the restricted space |lam| <= 20
    spec, p = spec_params("generalized_gamma")
    x = fam.sample(spec, p, 40, seed=11)
    f = fam.fit_ml(spec, x)
    assert f.params["lam"] == pytest.approx(20.0)
    assert f.log_likelihood == pytest.approx(oracles.gg_sup_bounded(x), abs=1e-7)
    unrestricted, _ = oracles.sup_loglik("generalized_gamma", x)
    assert unrestricted > f.log_likelihood + 0.1


def test_degenerate_data():
    with pytest.raises(DegenerateDataError):
        fam.fit_ml(fam.family_spec("gamma"), [2.0, 2.0, 2.0])
    with pytest.raises(DegenerateDataError):
        fam.fit_ml(fam.family_spec("normal"), [1.0])
    with pytest.raises(DegenerateDataError):
        fam.fit_ml(fam.family_spec("generalized_gamma"), [1.0, 2.0])


def test_generalized_gamma_lognormal_limit():
    spec = fam.family_spec("generalized_gamma")
    x = np.exp(fam.sample(fam.family_spec("normal"), {"mu": 0, "sigma": 1}, 2000, seed=4))
    f = fam.fit_ml(spec, x)
    assert abs(f.params["lam"]) < 0.15
    assert f.params["sigma"] == pytest.approx(1.0, abs=0.05)


# --- censored Weibull -----------------------------------------------------------


def _censored(seed, n=200, t_c=1.0):
    w = fam.family_spec("weibull")
    t = fam.sample(w, {"beta": 2, "eta": 1}, n, seed=seed)
    return np.sort(t[t <= t_c]), n, t_c


def test_censored_weibull_against_grid_oracle():
    t, n, t_c = _censored(11)
    f = fam.fit_ml_type1_censored(t, n, t_c)
    ll = lambda a, b: oracles.weibull_censored_loglik(a, b, t, n, t_c)
    best = oracles.grid_max_2d(ll, [np.log(0.2), np.log(0.2)], [np.log(8), np.log(8)])
    assert f.log_likelihood == pytest.approx(best[0], abs=1e-4)
    assert f.params["beta"] == pytest.approx(math.exp(best[1]), rel=1e-4)


def test_censored_weibull_consistency_smoke():
    # single seeds are stream specific; the smoke bound is applied to the median of 20 fits
    betas = [fam.fit_ml_type1_censored(*_censored(s)).params["beta"] for s in range(20)]
    assert 1.6 <= np.median(betas) <= 2.4


@pytest.mark.parametrize("c", [0.01, 3.0, 250.0])
def test_censored_weibull_scale_equivariance(c):
    t, n, t_c = _censored(12)
    a = fam.fit_ml_type1_censored(t, n, t_c)
    b = fam.fit_ml_type1_censored(c * t, n, c * t_c)
    assert b.params["beta"] == pytest.approx(a.params["beta"], rel=1e-8)
    assert b.params["eta"] == pytest.approx(c * a.params["eta"], rel=1e-8)


def test_censored_weibull_insufficient_information():
    with pytest.raises((FitError, DegenerateDataError)):
        fam.fit_ml_type1_censored([1.0], 1, 1.0)
    with pytest.raises(NoFailuresError):
        fam.fit_ml_type1_censored([], 10, 1.0)
    with pytest.raises(SupportError):
        fam.fit_ml_type1_censored([0.5, 1.5], 10, 1.0)


# --- single-observation supremum -------------------------------------------------


def test_single_obs_sup_examples():
    assert fam.single_obs_sup(fam.family_spec("exponential"), {}, 1.0) == pytest.approx(math.exp(-1))
    assert fam.single_obs_sup(fam.family_spec("gamma"), {"alpha": 1}, 2.0) == pytest.approx(
        0.1839397206, abs=1e-9)
    assert fam.single_obs_sup(fam.family_spec("uniform"), {}, 4.0) == pytest.approx(0.25)
    with pytest.raises(SupportError):
        fam.single_obs_sup(fam.family_spec("uniform"), {}, -1.0)


@pytest.mark.parametrize("name", ["normal", "normal_known_sigma", "exponential",
                                  "two_param_exponential", "uniform", "gamma", "weibull",
                                  "generalized_gamma"])
def test_single_obs_sup_matches_golden_section(name):
    spec, p = spec_params(name)
    hyper = POINTS[name][0]
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    varied = spec.varied_param
    for _ in range(100):
        q = {k: (v * math.exp(rng.normal(0, 0.4)) if k not in ("mu", "lam") else v + rng.normal())
             for k, v in p.items()}
        y = float(fam.quantile(spec, p, rng.uniform(0.02, 0.98)))
        got = fam.single_obs_sup(spec, q, y)

        def f(v):
            r = dict(q, **hyper)
            r[varied] = math.exp(v) if varied in ("theta", "beta", "eta") else v
            return float(oracles.LOGPDF[name](y, r))

        if name == "two_param_exponential":
            ref = -math.log(q["beta"])  # location sup at mu_y = y (boundary of support)
        elif name == "uniform":
            ref = -math.log(y)
        else:
            c = math.log(y) if varied in ("theta", "beta", "eta") or name == "generalized_gamma" else y
            ref, _ = oracles.golden_max(f, c - 25, c + 25)
        assert math.log(got) == pytest.approx(ref, abs=1e-8 * max(1.0, abs(ref)))

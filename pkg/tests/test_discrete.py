import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from lrpi.discrete import (BinomialSetup, IntegerInterval, PoissonSetup, binomial_neg2_log_lr,
                           discrete_bound, discrete_prediction_set, poisson_neg2_log_lr)


def binom_oracle(x, n, y, m):
    """Two-sample LR from scipy log-pmfs at the separate and pooled ML estimates."""
    sep = stats.binom.logpmf(x, n, x / n) + stats.binom.logpmf(y, m, y / m)
    p = (x + y) / (n + m)
    pool = stats.binom.logpmf(x, n, p) + stats.binom.logpmf(y, m, p)
    return 2.0 * (sep - pool)


def poisson_oracle(x, n, y, m):
    def lp(k, mu):
        return 0.0 if k == 0 and mu == 0 else stats.poisson.logpmf(k, mu)

    rate = (x + y) / (n + m)
    sep = lp(x, x) + lp(y, y)
    pool = lp(x, n * rate) + lp(y, m * rate)
    return 2.0 * (sep - pool)


# --- statistics -----------------------------------------------------------------


def test_binomial_examples():
    assert binomial_neg2_log_lr(BinomialSetup(5, 10, 10), 5) == pytest.approx(0.0, abs=1e-14)
    assert binomial_neg2_log_lr(BinomialSetup(1, 2, 2), 0) == pytest.approx(
        -2 * math.log(0.421875), abs=1e-12)
    assert -2 * math.log(0.421875) == pytest.approx(1.7260924, abs=1e-7)
    assert binomial_neg2_log_lr(BinomialSetup(0, 15, 15), 0, corrected=True) == pytest.approx(
        0.0, abs=1e-14)


def test_poisson_examples():
    assert poisson_neg2_log_lr(PoissonSetup(2, 1, 1), 2) == pytest.approx(0.0, abs=1e-14)
    assert poisson_neg2_log_lr(PoissonSetup(4, 2, 1), 0) == pytest.approx(
        -2 * math.log(16 / 81), abs=1e-12)
    assert -2 * math.log(16 / 81) == pytest.approx(3.2437209, abs=1e-7)
    assert poisson_neg2_log_lr(PoissonSetup(0, 1, 1), 0, corrected=True) == pytest.approx(
        0.0, abs=1e-14)
    assert poisson_neg2_log_lr(PoissonSetup(0, 1, 1), 0) == 0.0


def test_corrections_move_only_extreme_counts():
    s = BinomialSetup(3, 10, 8)
    assert binomial_neg2_log_lr(s, 4, True) == binomial_neg2_log_lr(s, 4, False)
    assert binomial_neg2_log_lr(s, 0, True) < binomial_neg2_log_lr(s, 0, False)
    p = PoissonSetup(3, 1.0, 2.0)
    assert poisson_neg2_log_lr(p, 5, True) == poisson_neg2_log_lr(p, 5, False)


@given(st.integers(1, 60), st.integers(1, 60), st.data())
def test_binomial_symmetry(n, m, data):
    x = data.draw(st.integers(0, n))
    y = data.draw(st.integers(0, m))
    for corrected in (False, True):
        a = binomial_neg2_log_lr(BinomialSetup(x, n, m), y, corrected)
        b = binomial_neg2_log_lr(BinomialSetup(n - x, n, m), m - y, corrected)
        assert a == pytest.approx(b, abs=1e-12)
        assert a >= 0


def test_binomial_matches_pooled_oracle_on_full_grid():
    for n in range(1, 7):
        for m in range(1, 7):
            for x in range(n + 1):
                got = binomial_neg2_log_lr(BinomialSetup(x, n, m), np.arange(m + 1))
                ref = [binom_oracle(x, n, y, m) for y in range(m + 1)]
                assert np.allclose(got, ref, rtol=0, atol=1e-12)


def test_poisson_matches_pooled_oracle_on_full_grid():
    for n in range(1, 7):
        for m in range(1, 7):
            for x in range(7):
                got = poisson_neg2_log_lr(PoissonSetup(x, n, m), np.arange(7))
                ref = [poisson_oracle(x, n, y, m) for y in range(7)]
                assert np.allclose(got, ref, rtol=0, atol=1e-12)


def _assert_valley(vals):
    i0 = int(np.argmin(vals))
    assert np.all(np.diff(vals[: i0 + 1]) <= 1e-12)
    assert np.all(np.diff(vals[i0:]) >= -1e-12)


@pytest.mark.parametrize("corrected", [False, True])
def test_monotone_tails(corrected):
    for n in range(1, 51, 7):
        for m in range(1, 51, 6):
            for x in range(0, n + 1, max(1, n // 5)):
                _assert_valley(binomial_neg2_log_lr(BinomialSetup(x, n, m), np.arange(m + 1),
                                                    corrected))
                _assert_valley(poisson_neg2_log_lr(PoissonSetup(x, n, m), np.arange(4 * m + 40),
                                                   corrected))


def test_binomial_statistic_is_asymptotically_chi2_one():
    rng = np.random.default_rng(20240)
    X = rng.binomial(400, 0.3, size=100_000)
    Y = rng.binomial(400, 0.3, size=100_000)
    vals = np.array([binomial_neg2_log_lr(BinomialSetup(int(x), 400, 400), int(y))
                     for x, y in zip(X[:2000], Y[:2000])])
    # vectorize over y per distinct x for the full run
    out = np.empty(X.size)
    for x in np.unique(X):
        idx = np.flatnonzero(X == x)
        out[idx] = binomial_neg2_log_lr(BinomialSetup(int(x), 400, 400), Y[idx])
    assert np.array_equal(out[:2000], vals)
    assert abs(np.quantile(out, 0.95) - 3.8415) < 0.15


def test_validation():
    with pytest.raises(ValueError):
        BinomialSetup(5, 4, 3)
    with pytest.raises(ValueError):
        BinomialSetup(0, 0, 3)
    with pytest.raises(ValueError):
        PoissonSetup(-1)
    with pytest.raises(ValueError):
        PoissonSetup(1, 0.0, 1.0)
    with pytest.raises(ValueError):
        binomial_neg2_log_lr(BinomialSetup(1, 2, 2), 3)
    with pytest.raises(ValueError):
        poisson_neg2_log_lr(PoissonSetup(1), -1)
    with pytest.raises(ValueError):
        IntegerInterval(3, 2)


# --- sets and bounds --------------------------------------------------------------


def test_prediction_set_examples():
    assert 5 in discrete_prediction_set(BinomialSetup(5, 10, 10))
    s = discrete_prediction_set(BinomialSetup(1, 2, 2))
    assert (s.lo, s.hi) == (0, 2)
    assert 0 in discrete_prediction_set(PoissonSetup(0, 1, 1), corrected=True)


def _brute_set(setup, level, corrected, top=None):
    thr = stats.chi2.ppf(level, 1)
    if isinstance(setup, BinomialSetup):
        ys = range(setup.m + 1)
        f = lambda y: binom_oracle(setup.x, setup.n, y, setup.m)
    else:
        ys = range(top)
        f = lambda y: poisson_oracle(setup.x, setup.n, y, setup.m)
    return [y for y in ys if f(y) <= thr]


@given(st.integers(1, 40), st.integers(1, 40), st.data(), st.sampled_from([0.8, 0.9, 0.95, 0.99]))
def test_binomial_set_is_the_passing_run(n, m, data, level):
    x = data.draw(st.integers(0, n))
    s = discrete_prediction_set(BinomialSetup(x, n, m), level)
    passing = _brute_set(BinomialSetup(x, n, m), level, False)
    if passing:
        assert (s.lo, s.hi) == (min(passing), max(passing))
        assert len(passing) == s.hi - s.lo + 1
    assert 0 <= s.lo <= s.hi <= m


@given(st.integers(0, 40), st.sampled_from([0.5, 1.0, 2.0, 5.0]), st.sampled_from([0.5, 1.0, 3.0]),
       st.sampled_from([0.9, 0.95, 0.99]))
def test_poisson_set_is_the_passing_run(x, n, m, level):
    setup = PoissonSetup(x, n, m)
    s = discrete_prediction_set(setup, level)
    passing = _brute_set(setup, level, False, top=s.hi + 200)
    assert (s.lo, s.hi) == (min(passing), max(passing))


def test_empty_set_returns_argmin_with_diagnostic():
    # x/n = 1/2 cannot be matched by a single future trial
    s = discrete_prediction_set(BinomialSetup(1, 2, 1), level=1e-6)
    assert s.lo == s.hi
    assert s.diagnostics.get("below_nominal") is True
    assert s.diagnostics["min_statistic"] == pytest.approx(binom_oracle(1, 2, 0, 1))


def test_one_sided_bounds_are_ends_of_wider_set():
    setup = BinomialSetup(12, 40, 30)
    wide = discrete_prediction_set(setup, 0.9)
    assert discrete_bound(setup, 0.95, "upper") == wide.hi
    assert discrete_bound(setup, 0.95, "lower") == wide.lo
    p = PoissonSetup(7, 2.0, 1.0)
    assert discrete_bound(p, 0.95, "upper", corrected=True) == discrete_prediction_set(
        p, 0.9, corrected=True).hi
    with pytest.raises(ValueError):
        discrete_bound(setup, 0.4)
    with pytest.raises(ValueError):
        discrete_bound(setup, 0.95, "middle")
    with pytest.raises(TypeError):
        discrete_prediction_set((1, 2, 3))

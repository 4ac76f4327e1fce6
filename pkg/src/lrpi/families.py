"""Parametric families: densities, samplers, ML fitting and single-observation suprema.

Every family is implemented once in vectorized form.  Parameters are passed
around internally as dicts of numpy arrays so that one call can fit thousands
of bootstrap samples (rows of a 2-D array).  The public functions at the bottom
of the module wrap these for the scalar, validated use case.

Two kinds of ML fit are needed by the prediction LR:

* the ordinary fit of a sample (``extra=0``), used for the data and for the
  pooled sample ``(x_1, ..., x_n, y)``;
* the *full-model* fit (``extra=1``), which maximizes
  ``sum log f(x_i; theta) + log g(common(theta))`` where
  ``sup_{varied} f(y; theta_y) = g(common) * h(y)``.  Because the supremum
  factorizes for every family here, the full-model fit never depends on y.
"""

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy import special

from . import rng
from ._optimize import newton_maximize, solve_decreasing
from .errors import (DegenerateDataError, FitError, NoFailuresError,
                     ParameterDomainError, SupportError)

LOG_2PI = math.log(2.0 * math.pi)
HALF_LOG_2PI = 0.5 * LOG_2PI


class FamilyId(str, Enum):
    NORMAL = "normal"
    NORMAL_KNOWN_SIGMA = "normal_known_sigma"
    EXPONENTIAL = "exponential"
    TWO_PARAM_EXPONENTIAL = "two_param_exponential"
    UNIFORM = "uniform"
    GAMMA = "gamma"
    WEIBULL = "weibull"
    GENERALIZED_GAMMA = "generalized_gamma"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = "".join(ch for ch in str(value).lower() if ch.isalnum())
        try:
            return _ALIASES[key]
        except KeyError:
            raise ParameterDomainError(f"unknown family {value!r}") from None


_ALIASES = {
    "normal": FamilyId.NORMAL,
    "norm": FamilyId.NORMAL,
    "normalknownsigma": FamilyId.NORMAL_KNOWN_SIGMA,
    "exponential": FamilyId.EXPONENTIAL,
    "exp": FamilyId.EXPONENTIAL,
    "twoparamexponential": FamilyId.TWO_PARAM_EXPONENTIAL,
    "twoparameterexponential": FamilyId.TWO_PARAM_EXPONENTIAL,
    "uniform": FamilyId.UNIFORM,
    "uniformzerotheta": FamilyId.UNIFORM,
    "gamma": FamilyId.GAMMA,
    "weibull": FamilyId.WEIBULL,
    "generalizedgamma": FamilyId.GENERALIZED_GAMMA,
    "gengamma": FamilyId.GENERALIZED_GAMMA,
}


class FitBatch(NamedTuple):
    params: dict
    loglik: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray


def _rows(X):
    X = np.asarray(X, dtype=float)
    return X[None, :] if X.ndim == 1 else X


def _full(n, value):
    return np.full(n, value, dtype=float)


# ---------------------------------------------------------------------------
# Family implementations
# ---------------------------------------------------------------------------


class _Family:
    fid = None
    names = ()
    hyper_names = ()
    varied = None
    min_n = 1
    positive_data = True
    y_lo = 0.0
    y_hi = math.inf
    has_closed_lr = False

    def check(self, values):
        for name in self.names:
            v = values.get(name)
            if v is None or not np.all(np.isfinite(v)):
                raise ParameterDomainError(f"{self.fid.value}: {name} must be finite", param=name)
        self._check(values)

    def _check(self, values):
        pass

    def check_data(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size < 1:
            raise SupportError("data must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(x)):
            raise SupportError("data contain non-finite values")
        if self.positive_data and np.any(x <= 0):
            raise SupportError(f"{self.fid.value} data must be strictly positive")
        return x

    def in_y_support(self, y):
        return (y > self.y_lo) & (y < self.y_hi) if self.y_lo == 0.0 else np.isfinite(y)

    def center(self, x):
        return float(np.mean(x))

    def y0_closed(self, X):
        return None

    def closed_neg2(self, X, y, hyper):
        return None

    def sample(self, p, u):
        return self.ppf(u, p)


class _Normal(_Family):
    fid = FamilyId.NORMAL
    names = ("mu", "sigma")
    varied = "mu"
    min_n = 2
    positive_data = False
    y_lo = -math.inf
    has_closed_lr = True

    def _check(self, v):
        if not np.all(np.asarray(v["sigma"]) > 0):
            raise ParameterDomainError("normal: sigma must be > 0", param="sigma")

    def logpdf(self, x, p):
        z = (x - p["mu"]) / p["sigma"]
        return -HALF_LOG_2PI - np.log(p["sigma"]) - 0.5 * z * z

    def cdf(self, x, p):
        return special.ndtr((x - p["mu"]) / p["sigma"])

    def ppf(self, u, p):
        return p["mu"] + p["sigma"] * special.ndtri(u)

    def log_g(self, p):
        return -np.log(p["sigma"]) - HALF_LOG_2PI

    def log_h(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def varied_hat(self, y, p):
        return np.asarray(y, dtype=float)

    def mode_point(self, p):
        return p["mu"]

    def fit(self, X, extra=0, hyper=None):
        X = _rows(X)
        B, n = X.shape
        mu = X.mean(axis=1)
        ss = np.sum((X - mu[:, None]) ** 2, axis=1)
        k = n + extra
        var = ss / k
        ok = var > 0
        with np.errstate(divide="ignore"):
            loglik = -0.5 * k * (LOG_2PI + np.log(var) + 1.0)
        sigma = np.sqrt(var)
        return FitBatch({"mu": mu, "sigma": sigma}, loglik, ok, np.zeros(B, int))

    def y0_closed(self, X):
        return _rows(X).mean(axis=1)

    def closed_neg2(self, X, y, hyper):
        X = _rows(X)
        n = X.shape[1]
        xbar = X.mean(axis=1)
        ss = np.sum((X - xbar[:, None]) ** 2, axis=1)
        return (n + 1) * np.log1p(n * (y - xbar) ** 2 / ((n + 1) * ss))


class _NormalKnownSigma(_Normal):
    fid = FamilyId.NORMAL_KNOWN_SIGMA
    names = ("mu",)
    hyper_names = ("sigma",)
    min_n = 1

    def _check(self, v):
        pass

    def fit(self, X, extra=0, hyper=None):
        X = _rows(X)
        B, n = X.shape
        sigma = float(hyper["sigma"])
        mu = X.mean(axis=1)
        p = {"mu": mu, "sigma": _full(B, sigma)}
        loglik = np.sum(self.logpdf(X, {"mu": mu[:, None], "sigma": sigma}), axis=1)
        loglik = loglik + extra * self.log_g(p)
        return FitBatch(p, loglik, np.ones(B, bool), np.zeros(B, int))

    def closed_neg2(self, X, y, hyper):
        X = _rows(X)
        n = X.shape[1]
        xbar = X.mean(axis=1)
        return n / (n + 1.0) * ((y - xbar) / float(hyper["sigma"])) ** 2


class _Exponential(_Family):
    fid = FamilyId.EXPONENTIAL
    names = ("theta",)
    varied = "theta"
    has_closed_lr = True

    def _check(self, v):
        if not np.all(np.asarray(v["theta"]) > 0):
            raise ParameterDomainError("exponential: theta must be > 0", param="theta")

    def logpdf(self, x, p):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -np.log(p["theta"]) - x / p["theta"]
        return np.where(x > 0, out, -np.inf)

    def cdf(self, x, p):
        return -np.expm1(-np.maximum(x, 0.0) / p["theta"])

    def ppf(self, u, p):
        return -p["theta"] * np.log1p(-u)

    def log_g(self, p):
        return np.full(np.shape(p["theta"]), -1.0)

    def log_h(self, y):
        return -np.log(y)

    def varied_hat(self, y, p):
        return np.asarray(y, dtype=float)

    def mode_point(self, p):
        return p["theta"]

    def fit(self, X, extra=0, hyper=None):
        X = _rows(X)
        B, n = X.shape
        theta = X.mean(axis=1)
        loglik = -n * np.log(theta) - n - extra
        return FitBatch({"theta": theta}, loglik, np.ones(B, bool), np.zeros(B, int))

    def y0_closed(self, X):
        return _rows(X).mean(axis=1)

    def closed_neg2(self, X, y, hyper):
        X = _rows(X)
        n = X.shape[1]
        r = X.mean(axis=1) / y
        log_lam = n * np.log(r) - (n + 1) * np.log(n / (n + 1.0) * r + 1.0 / (n + 1.0))
        return -2.0 * log_lam


class _TwoParamExponential(_Family):
    fid = FamilyId.TWO_PARAM_EXPONENTIAL
    names = ("mu", "beta")
    varied = "mu"
    min_n = 2
    positive_data = False
    y_lo = -math.inf
    has_closed_lr = True

    def _check(self, v):
        if not np.all(np.asarray(v["beta"]) > 0):
            raise ParameterDomainError("two-parameter exponential: beta must be > 0", param="beta")

    def logpdf(self, x, p):
        x = np.asarray(x, dtype=float)
        out = -np.log(p["beta"]) - (x - p["mu"]) / p["beta"]
        return np.where(x >= p["mu"], out, -np.inf)

    def cdf(self, x, p):
        return -np.expm1(-np.maximum(x - p["mu"], 0.0) / p["beta"])

    def ppf(self, u, p):
        return p["mu"] - p["beta"] * np.log1p(-u)

    def log_g(self, p):
        return -np.log(p["beta"])

    def log_h(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def varied_hat(self, y, p):
        return np.asarray(y, dtype=float)

    def mode_point(self, p):
        return p["mu"]

    def fit(self, X, extra=0, hyper=None):
        X = _rows(X)
        B, n = X.shape
        mu = X.min(axis=1)
        excess = np.sum(X - mu[:, None], axis=1)
        k = n + extra
        beta = excess / k
        ok = beta > 0
        with np.errstate(divide="ignore"):
            loglik = -k * (np.log(beta) + 1.0)
        return FitBatch({"mu": mu, "beta": beta}, loglik, ok, np.zeros(B, int))

    def y0_closed(self, X):
        return _rows(X).min(axis=1)

    def closed_neg2(self, X, y, hyper):
        X = _rows(X)
        n = X.shape[1]
        total = X.sum(axis=1)
        x1 = X.min(axis=1)
        num = total - n * x1
        den = total + y - (n + 1) * np.minimum(x1, y)
        return 2.0 * (n + 1) * (np.log(den) - np.log(num))


class _Uniform(_Family):
    fid = FamilyId.UNIFORM
    names = ("theta",)
    varied = "theta"
    has_closed_lr = True

    def _check(self, v):
        if not np.all(np.asarray(v["theta"]) > 0):
            raise ParameterDomainError("uniform: theta must be > 0", param="theta")

    def logpdf(self, x, p):
        x = np.asarray(x, dtype=float)
        return np.where((x > 0) & (x <= p["theta"]), -np.log(p["theta"]), -np.inf)

    def cdf(self, x, p):
        return np.clip(np.asarray(x, dtype=float) / p["theta"], 0.0, 1.0)

    def ppf(self, u, p):
        return p["theta"] * u

    def log_g(self, p):
        return np.zeros(np.shape(p["theta"]))

    def log_h(self, y):
        return -np.log(y)

    def varied_hat(self, y, p):
        return np.asarray(y, dtype=float)

    def mode_point(self, p):
        return p["theta"]

    def center(self, x):
        return float(np.max(x))

    def fit(self, X, extra=0, hyper=None):
        X = _rows(X)
        B, n = X.shape
        theta = X.max(axis=1)
        return FitBatch({"theta": theta}, -n * np.log(theta), np.ones(B, bool), np.zeros(B, int))

    def y0_closed(self, X):
        return _rows(X).max(axis=1)

    def closed_neg2(self, X, y, hyper):
        X = _rows(X)
        n = X.shape[1]
        m = X.max(axis=1)
        log_lam = n * np.log(m) + np.log(y) - (n + 1) * np.log(np.maximum(m, y))
        return -2.0 * log_lam


def _gamma_shape(c, max_iter=200):
    """Solve ``log(a) - digamma(a) = c`` row-wise (c > 0) by safeguarded Newton in log a."""
    c = np.asarray(c, dtype=float)
    ok = c > 0
    cc = np.where(ok, c, 1.0)
    a0 = (3.0 - cc + np.sqrt((cc - 3.0) ** 2 + 24.0 * cc)) / (12.0 * cc)

    def func(u, idx):
        a = np.exp(u)
        g = u - special.digamma(a) - cc[idx]
        dg = 1.0 - a * special.polygamma(1, a)
        return g, dg

    size = cc.size
    u, conv, its = solve_decreasing(func, _full(size, -30.0), _full(size, 34.0), np.log(a0),
                                    max_iter=max_iter)
    return np.exp(u), conv & ok, its


class _Gamma(_Family):
    fid = FamilyId.GAMMA
    names = ("alpha", "beta")
    varied = "beta"
    min_n = 2

    def _check(self, v):
        for k in ("alpha", "beta"):
            if not np.all(np.asarray(v[k]) > 0):
                raise ParameterDomainError(f"gamma: {k} must be > 0", param=k)

    def logpdf(self, x, p):
        x = np.asarray(x, dtype=float)
        a, b = p["alpha"], p["beta"]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (a - 1.0) * np.log(x) - x / b - a * np.log(b) - special.gammaln(a)
        return np.where(x > 0, out, -np.inf)

    def cdf(self, x, p):
        return special.gammainc(p["alpha"], np.maximum(x, 0.0) / p["beta"])

    def ppf(self, u, p):
        return p["beta"] * special.gammaincinv(p["alpha"], u)

    def log_g(self, p):
        a = p["alpha"]
        return a * np.log(a) - a - special.gammaln(a)

    def log_h(self, y):
        return -np.log(y)

    def varied_hat(self, y, p):
        return np.asarray(y, dtype=float) / p["alpha"]

    def mode_point(self, p):
        return p["alpha"] * p["beta"]

    def fit(self, X, extra=0, hyper=None):
        X = _rows(X)
        B, n = X.shape
        mean = X.mean(axis=1)
        logs = np.log(X)
        s = np.log(mean) - logs.mean(axis=1)
        c = s * n / (n + extra)
        alpha, conv, its = _gamma_shape(c)
        beta = mean / alpha
        p = {"alpha": alpha, "beta": beta}
        loglik = ((alpha - 1.0) * logs.sum(axis=1) - n * mean / beta
                  - n * alpha * np.log(beta) - n * special.gammaln(alpha))
        loglik = loglik + extra * self.log_g(p)
        return FitBatch(p, loglik, conv, its)

    def y0_closed(self, X):
        # the pooled-fit mean equals (sum x + y)/(n+1); the slope of the LR
        # curve changes sign exactly where y equals the sample mean
        return _rows(X).mean(axis=1)


class _Weibull(_Family):
    fid = FamilyId.WEIBULL
    names = ("beta", "eta")
    varied = "eta"
    min_n = 2

    def _check(self, v):
        for k in ("beta", "eta"):
            if not np.all(np.asarray(v[k]) > 0):
                raise ParameterDomainError(f"weibull: {k} must be > 0", param=k)

    def logpdf(self, x, p):
        x = np.asarray(x, dtype=float)
        b, e = p["beta"], p["eta"]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.log(x) - np.log(e)
            out = np.log(b) - np.log(e) + (b - 1.0) * z - np.exp(b * z)
        return np.where(x > 0, out, -np.inf)

    def cdf(self, x, p):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-((x / p["eta"]) ** p["beta"]))

    def logsf(self, x, p):
        return -((np.asarray(x, dtype=float) / p["eta"]) ** p["beta"])

    def ppf(self, u, p):
        return p["eta"] * (-np.log1p(-u)) ** (1.0 / p["beta"])

    def log_g(self, p):
        return np.log(p["beta"]) - 1.0

    def log_h(self, y):
        return -np.log(y)

    def varied_hat(self, y, p):
        return np.asarray(y, dtype=float)

    def mode_point(self, p):
        return p["eta"]

    def fit(self, X, extra=0, hyper=None):
        X = _rows(X)
        B, n = X.shape
        logs = np.log(X)
        beta, eta, loglik, conv, its = _weibull_shape_core(
            logs, np.ones_like(logs), _full(B, n), logs.sum(axis=1), extra)
        return FitBatch({"beta": beta, "eta": eta}, loglik, conv, its)


def _stirling_terms(lam):
    """``r(lam) = R(lam**-2)`` and its first two derivatives in ``lam``, where
    ``R(k) = lgamma(k) - (k - 1/2) log k + k - log(2 pi)/2`` is the Stirling remainder."""
    lam = np.asarray(lam, dtype=float)
    small = np.abs(lam) < 0.3
    l2 = lam * lam
    r_s = l2 * (1 / 12 + l2 * l2 * (-1 / 360 + l2 * l2 * (1 / 1260 + l2 * l2 * (-1 / 1680 + l2 * l2 / 1188))))
    r1_s = lam * (1 / 6 + l2 * l2 * (-1 / 60 + l2 * l2 * (1 / 126 + l2 * l2 * (-1 / 120 + l2 * l2 * 3 / 198))))
    r2_s = 1 / 6 + l2 * l2 * (-1 / 12 + l2 * l2 * (1 / 14 + l2 * l2 * (-13 / 120 + l2 * l2 * 17 / 66)))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ls = np.where(small, 1.0, lam)
        k = 1.0 / (ls * ls)
        Rk = special.gammaln(k) - (k - 0.5) * np.log(k) + k - HALF_LOG_2PI
        Rk1 = special.digamma(k) - np.log(k) + 0.5 / k
        Rk2 = special.polygamma(1, k) - 1.0 / k - 0.5 / (k * k)
        r1 = -2.0 * Rk1 / ls**3
        r2 = 4.0 * Rk2 / ls**6 + 6.0 * Rk1 / ls**4
    return (np.where(small, r_s, Rk), np.where(small, r1_s, r1), np.where(small, r2_s, r2))


def _stirling_remainder(lam):
    return _stirling_terms(lam)[0]


def _expm1_ratio(u):
    """``(exp(u) - 1 - u) / u**2`` evaluated stably; equals 1/2 at u = 0."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 1e-3
    taylor = 0.5 + u / 6.0 + u * u / 24.0 + u**3 / 120.0 + u**4 / 720.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        uu = np.where(small, 1.0, u)
        direct = (np.expm1(uu) - uu) / (uu * uu)
    return np.where(small, taylor, direct)


class _LogSample:
    """Centred log data with the summaries needed by the generalized gamma profile.

    ``K(a) = log mean exp(a d)`` is the empirical cumulant generating function
    of the centred log data ``d``; the fit works with ``Phi(a) = K(a) / a**2``,
    switching to its cumulant series when ``|a| max|d|`` is tiny.
    """

    series_cut = 1e-3

    def __init__(self, L):
        self.lbar = L.mean(axis=1)
        self.lsum = L.sum(axis=1)
        self.d = L - self.lbar[:, None]
        self.n = L.shape[1]
        self.dmax = np.max(np.abs(self.d), axis=1)
        m = [np.mean(self.d**j, axis=1) for j in range(2, 7)]
        m2, m3, m4, m5, m6 = m
        self.cum = (m2, m3, m4 - 3 * m2**2, m5 - 10 * m3 * m2,
                    m6 - 15 * m4 * m2 - 10 * m3**2 + 30 * m2**3)

    def phi(self, a, idx, order=2):
        """``Phi``, ``Phi'``, ``Phi''`` at ``a`` for rows ``idx`` (fewer if ``order`` < 2)."""
        d = self.d[idx]
        k2, k3, k4, k5, k6 = (c[idx] for c in self.cum)
        small = np.abs(a) * self.dmax[idx] < self.series_cut
        p0 = k2 / 2 + a * (k3 / 6 + a * (k4 / 24 + a * (k5 / 120 + a * k6 / 720)))
        a_s = np.where(small, 1.0, a)
        ad = a_s[:, None] * d
        top = np.max(ad, axis=1)
        with np.errstate(over="ignore", invalid="ignore"):
            w = np.exp(ad - top[:, None])
            tot = w.sum(axis=1)
            K = top + np.log(tot / self.n)
            phi0 = np.where(small, p0, K / a_s**2)
            if order == 0:
                return (phi0,)
            K1 = (w * d).sum(axis=1) / tot
            K2 = (w * d * d).sum(axis=1) / tot - K1 * K1
            p1 = k3 / 6 + a * (k4 / 12 + a * (k5 / 40 + a * k6 / 180))
            p2 = k4 / 12 + a * (k5 / 20 + a * k6 / 60)
            phi1 = np.where(small, p1, K1 / a_s**2 - 2 * K / a_s**3)
            phi2 = np.where(small, p2, K2 / a_s**2 - 4 * K1 / a_s**3 + 6 * K / a_s**4)
        return phi0, phi1, phi2


class _GeneralizedGamma(_Family):
    """Extended generalized gamma on the log scale (location mu, scale sigma, shape lam).

    The log-density is written as
    ``-log(2 pi)/2 - R(lam**-2) - w**2 * q(lam * w) - log(sigma) - log(y)`` with
    ``w = (log y - mu)/sigma``, ``R`` the Stirling remainder and
    ``q(u) = (e**u - 1 - u)/u**2``.  This form is algebraically identical to the
    log-gamma density for lam != 0 and reduces continuously to the lognormal at
    lam = 0, so optimizers can cross zero without a branch.

    Maximizing over mu in closed form leaves, per observation,
    ``-log(2 pi)/2 - R - log(sigma) - K(lam/sigma)/lam**2 - mean(log y)``
    with ``K`` the cumulant generating function of the centred log data; the
    fit runs Newton on that two-parameter profile with analytic derivatives.
    The shape is confined to ``|lam| <= lam_bound``: for small samples the
    likelihood can increase without limit in ``|lam|`` (towards a power-function
    or Pareto-type limit), and then the supremum over the bounded space is used.
    """

    fid = FamilyId.GENERALIZED_GAMMA
    names = ("mu", "sigma", "lam")
    varied = "mu"
    min_n = 3
    lam_bound = 20.0
    log_sigma_bounds = (-20.0, 8.0)
    lognormal_guard = 1e-6

    def _check(self, v):
        if not np.all(np.asarray(v["sigma"]) > 0):
            raise ParameterDomainError("generalized gamma: sigma must be > 0", param="sigma")

    @staticmethod
    def _log_std(w, lam):
        return -HALF_LOG_2PI - _stirling_remainder(lam) - w * w * _expm1_ratio(lam * w)

    def logpdf(self, x, p):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ly = np.log(x)
            w = (ly - p["mu"]) / p["sigma"]
            out = self._log_std(w, p["lam"]) - np.log(p["sigma"]) - ly
        return np.where(x > 0, out, -np.inf)

    def cdf(self, x, p):
        x = np.asarray(x, dtype=float)
        mu, sigma, lam = (np.asarray(p[k], dtype=float) for k in self.names)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            w = (np.log(np.maximum(x, 1e-300)) - mu) / sigma
            near = np.abs(lam) < self.lognormal_guard
            lam_s = np.where(near, 1.0, lam)
            k = 1.0 / (lam_s * lam_s)
            q = k * np.exp(lam_s * w)
            out = np.where(lam_s > 0, special.gammainc(k, q), special.gammaincc(k, q))
            out = np.where(near, special.ndtr(w), out)
        return np.where(x > 0, out, 0.0)

    def ppf(self, u, p):
        mu, sigma, lam = (np.asarray(p[k], dtype=float) for k in self.names)
        near = np.abs(lam) < self.lognormal_guard
        lam_s = np.where(near, 1.0, lam)
        k = 1.0 / (lam_s * lam_s)
        q = np.where(lam_s > 0, special.gammaincinv(k, u), special.gammainccinv(k, u))
        with np.errstate(divide="ignore"):
            log_q = np.log(q)
            # tiny shapes underflow; there P(k, q) ~ q**k / Gamma(k + 1)
            lower_p = np.where(lam_s > 0, np.log(u), np.log1p(-u))
            log_q = np.where(q > 1e-280, log_q, (lower_p + special.gammaln(k + 1)) / k)
        w = (log_q - np.log(k)) / lam_s
        w = np.where(near, special.ndtri(u), w)
        return np.exp(mu + sigma * w)

    def log_g(self, p):
        return -np.log(p["sigma"]) - HALF_LOG_2PI - _stirling_remainder(p["lam"])

    def log_h(self, y):
        return -np.log(y)

    def varied_hat(self, y, p):
        return np.log(y)

    def mode_point(self, p):
        return np.exp(p["mu"])

    def _objective(self, ls, extra):
        """Profiled log-likelihood in ``z = (log sigma, lam)`` and its derivatives."""
        n = ls.n

        def parts(z, idx, order):
            s, lam = z[:, 0], z[:, 1]
            es = np.exp(-s)
            a = lam * es
            r = _stirling_terms(lam) if order else (_stirling_remainder(lam),)
            ph = ls.phi(a, idx, order=2 if order else 0)
            e2 = es * es
            f = (n + extra) * (-HALF_LOG_2PI - r[0] - s) - n * e2 * ph[0] - ls.lsum[idx]
            return f, r, ph, a, es, e2

        def fun(z, idx):
            f = parts(z, idx, 0)[0]
            return np.where(np.isfinite(f), f, -np.inf)

        def derivatives(z, idx):
            _, r, (p0, p1, p2), a, es, e2 = parts(z, idx, 2)
            m = n + extra
            e3 = e2 * es
            g_s = -m + n * e2 * (2 * p0 + a * p1)
            g_l = -m * r[1] - n * e3 * p1
            h_ss = -n * e2 * (4 * p0 + 5 * a * p1 + a * a * p2)
            h_sl = n * e3 * (3 * p1 + a * p2)
            h_ll = -m * r[2] - n * e2 * e2 * p2
            grad = np.column_stack([g_s, g_l])
            hess = np.stack([np.column_stack([h_ss, h_sl]), np.column_stack([h_sl, h_ll])], axis=1)
            return grad, hess

        return fun, derivatives

    def starts(self, L):
        sd = np.maximum(L.std(axis=1), 1e-8)
        skew = np.mean((L - L.mean(axis=1)[:, None]) ** 3, axis=1) / sd**3
        lam_m = np.clip(-skew, -3.0, 3.0)
        s0 = np.log(sd)
        return [np.column_stack([s0, lam_m]),
                np.column_stack([s0, _full(len(s0), -1.0)]),
                np.column_stack([s0, _full(len(s0), 0.0)]),
                np.column_stack([s0, _full(len(s0), 1.0)]),
                np.column_stack([s0 + math.log(0.5), lam_m])]

    def boundary_starts(self, ls, fun, B):
        """Starts on each shape bound, at the best log sigma of a coarse scan.

        The profile can have a local maximum inside and a higher one on the
        bound; Newton from the interior starts never reaches the latter.
        """
        offsets = np.linspace(-9.0, 1.0, 21)
        s0 = np.log(np.maximum(np.sqrt(ls.cum[0]), 1e-8))
        idx = np.repeat(np.arange(B), offsets.size)
        s = np.clip((s0[:, None] + offsets).ravel(), *self.log_sigma_bounds)
        out = []
        for sign in (1.0, -1.0):
            z = np.column_stack([s, np.full(s.size, sign * self.lam_bound)])
            with np.errstate(all="ignore"):
                v = fun(z, idx).reshape(B, offsets.size)
            best = s.reshape(B, offsets.size)[np.arange(B), np.argmax(v, axis=1)]
            out.append(np.column_stack([best, _full(B, sign * self.lam_bound)]))
        return out

    def fit(self, X, extra=0, hyper=None, starts=None, allow_boundary=True):
        """Batched ML fit over ``|lam| <= lam_bound``.

        Two starts on the shape bounds are always added to ``starts``.  With
        ``allow_boundary`` false, optima on the shape bound are reported as
        not converged.
        """
        X = _rows(X)
        L = np.log(X)
        B = L.shape[0]
        ls = _LogSample(L)
        fun, derivs = self._objective(ls, extra)
        if starts is None:
            starts = self.starts(L)
        starts = list(starts) + self.boundary_starts(ls, fun, B)
        k = len(starts)
        rows = np.tile(np.arange(B), k)
        lower = np.array([self.log_sigma_bounds[0], -self.lam_bound])
        upper = np.array([self.log_sigma_bounds[1], self.lam_bound])
        res = newton_maximize(lambda z, idx: fun(z, rows[idx]), np.concatenate(starts, axis=0),
                              lower, upper, derivatives=lambda z, idx: derivs(z, rows[idx]))
        vals = np.where(res.converged & np.isfinite(res.fun), res.fun, -np.inf).reshape(k, B)
        pick = np.argmax(vals, axis=0) * B + np.arange(B)
        z = res.x[pick]
        conv = res.converged[pick] & np.isfinite(res.fun[pick])
        s, lam = z[:, 0], z[:, 1]
        sigma = np.exp(s)
        a = lam / sigma
        mu = ls.lbar + a * ls.phi(a, np.arange(B), order=0)[0]
        conv &= (s > lower[0]) & (s < upper[0])
        if not allow_boundary:
            conv &= np.abs(lam) < self.lam_bound * (1 - 1e-9)
        return FitBatch({"mu": mu, "sigma": sigma, "lam": lam}, res.fun[pick], conv,
                        res.iterations[pick])

    def center(self, x):
        return float(np.exp(np.mean(np.log(x))))


_FAMILIES = {f.fid: f for f in (_Normal(), _NormalKnownSigma(), _Exponential(),
                                 _TwoParamExponential(), _Uniform(), _Gamma(), _Weibull(),
                                 _GeneralizedGamma())}


def family_impl(family):
    return _FAMILIES[FamilyId.parse(family)]


# ---------------------------------------------------------------------------
# Public types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FamilySpec:
    """A parametric family, its fixed hyperparameters and the varied component.

    ``varied_param`` names the parameter allowed to differ between the data
    and the predictand in the full model; it defaults to the component most
    easily maximized from a single observation (a mean, scale or log-location).
    """

    family_id: FamilyId
    fixed_hyperparams: tuple = field(default=())
    varied_param: str = None

    def __post_init__(self):
        fid = FamilyId.parse(self.family_id)
        object.__setattr__(self, "family_id", fid)
        impl = _FAMILIES[fid]
        hyper = self.fixed_hyperparams
        if isinstance(hyper, Mapping):
            hyper = tuple(sorted((str(k), float(v)) for k, v in hyper.items()))
        else:
            hyper = tuple(sorted((str(k), float(v)) for k, v in hyper))
        object.__setattr__(self, "fixed_hyperparams", hyper)
        names = {k for k, _ in hyper}
        if names != set(impl.hyper_names):
            raise ParameterDomainError(
                f"{fid.value} requires hyperparameters {sorted(impl.hyper_names)}, got {sorted(names)}")
        if fid is FamilyId.NORMAL_KNOWN_SIGMA and not dict(hyper)["sigma"] > 0:
            raise ParameterDomainError("known sigma must be > 0", param="sigma")
        varied = self.varied_param or impl.varied
        if varied not in impl.names:
            raise ParameterDomainError(f"{varied!r} is not a parameter of {fid.value}")
        if varied != impl.varied:
            raise ParameterDomainError(
                f"only the default varied parameter {impl.varied!r} is supported for {fid.value}")
        object.__setattr__(self, "varied_param", varied)

    @property
    def impl(self):
        return _FAMILIES[self.family_id]

    @property
    def hyper(self):
        return dict(self.fixed_hyperparams)

    @property
    def param_names(self):
        return self.impl.names

    def params(self, **values):
        return ParamVector(self.family_id, **values)

    def to_dict(self):
        return {"family": self.family_id.value, "fixed_hyperparams": self.hyper,
                "varied_param": self.varied_param}


def family_spec(name, **hyper):
    """Convenience constructor: ``family_spec("normal_known_sigma", sigma=2.0)``."""
    return FamilySpec(FamilyId.parse(name), hyper)


class ParamVector(Mapping):
    """Immutable, validated mapping of parameter name to value for one family."""

    __slots__ = ("family_id", "_values")

    def __init__(self, family, /, **values):
        fid = FamilyId.parse(family)
        impl = _FAMILIES[fid]
        extra = set(values) - set(impl.names)
        if extra:
            raise ParameterDomainError(f"unknown parameters {sorted(extra)} for {fid.value}")
        vals = {k: float(values[k]) if k in values else None for k in impl.names}
        impl.check(vals)
        object.__setattr__(self, "family_id", fid)
        object.__setattr__(self, "_values", vals)

    def __setattr__(self, key, value):
        raise AttributeError("ParamVector is immutable")

    def __getitem__(self, key):
        return self._values[key]

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self._values.items())
        return f"ParamVector({self.family_id.value}, {inner})"

    def __eq__(self, other):
        return (isinstance(other, ParamVector) and other.family_id == self.family_id
                and other._values == self._values)

    def __hash__(self):
        return hash((self.family_id, tuple(self._values.items())))


def _pdict(spec, params):
    p = {k: float(v) for k, v in params.items()}
    p.update(spec.hyper)
    return p


@dataclass(frozen=True)
class FittedModel:
    spec: FamilySpec
    params: ParamVector
    log_likelihood: float
    converged: bool
    iterations: int

    def to_dict(self):
        return {"family": self.spec.to_dict(), "params": dict(self.params),
                "log_likelihood": self.log_likelihood, "converged": self.converged,
                "iterations": self.iterations}


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def log_density(spec, params, x):
    """Log density of ``x`` (scalar or array); ``-inf`` outside the support."""
    if not isinstance(params, ParamVector):
        params = ParamVector(spec.family_id, **params)
    out = spec.impl.logpdf(np.asarray(x, dtype=float), _pdict(spec, params))
    return float(out) if np.ndim(out) == 0 else out


def cdf(spec, params, x):
    out = spec.impl.cdf(np.asarray(x, dtype=float), _pdict(spec, params))
    return float(out) if np.ndim(out) == 0 else out


def quantile(spec, params, u):
    out = spec.impl.ppf(np.asarray(u, dtype=float), _pdict(spec, params))
    return float(out) if np.ndim(out) == 0 else out


def sample(spec, params, count, seed):
    """``count`` iid draws by inverse cdf on the counter stream of ``seed``."""
    if not isinstance(params, ParamVector):
        params = ParamVector(spec.family_id, **params)
    if int(count) < 1:
        raise ValueError("count must be positive")
    u = rng.uniforms(rng.stream_key(seed), 0, 1, int(count))[0]
    return spec.impl.sample(_pdict(spec, params), u)


def as_dataset(spec, data):
    return spec.impl.check_data(data)


def _fit_checks(spec, x):
    impl = spec.impl
    if x.size < impl.min_n:
        raise DegenerateDataError(
            f"{spec.family_id.value} needs at least {impl.min_n} observations, got {x.size}")
    scale_family = spec.family_id not in (FamilyId.NORMAL_KNOWN_SIGMA, FamilyId.EXPONENTIAL,
                                          FamilyId.UNIFORM)
    if scale_family and np.ptp(x) == 0:
        raise DegenerateDataError("all observations are equal", n=int(x.size))


def fit_ml(spec, data):
    """Maximum likelihood fit of ``spec`` to complete data."""
    x = as_dataset(spec, data)
    _fit_checks(spec, x)
    fb = spec.impl.fit(x[None, :], 0, spec.hyper)
    return _to_fitted(spec, fb, context="fit_ml")


def fit_full_model(spec, data):
    """Fit of the full (enlarged) model: data likelihood times the y-free part of the
    single-observation supremum.  Independent of the predictand value."""
    x = as_dataset(spec, data)
    _fit_checks(spec, x)
    fb = spec.impl.fit(x[None, :], 1, spec.hyper)
    return _to_fitted(spec, fb, context="fit_full_model")


def _to_fitted(spec, fb, context):
    p = {k: float(v[0]) for k, v in fb.params.items() if k in spec.impl.names}
    if not bool(fb.converged[0]) or not np.isfinite(fb.loglik[0]):
        raise FitError(f"{context}: ML iteration did not converge for {spec.family_id.value}",
                       params=p, iterations=int(fb.iterations[0]))
    return FittedModel(spec, ParamVector(spec.family_id, **p), float(fb.loglik[0]), True,
                       int(fb.iterations[0]))


def fit_ml_type1_censored(times, n, t_c):
    """Weibull ML from Type-I censored data: failures ``times`` (all <= t_c) out of ``n`` units."""
    t = np.asarray(times, dtype=float)
    r = t.size
    if r == 0:
        raise NoFailuresError("no failures before the censoring time", n=int(n), t_c=float(t_c))
    if not (t_c > 0) or np.any(t <= 0) or np.any(t > t_c):
        raise SupportError("failure times must lie in (0, t_c]")
    if int(n) < r:
        raise SupportError("more failures than units", n=int(n), r=r)
    spec = FamilySpec(FamilyId.WEIBULL)
    beta, eta, loglik, conv = censored_weibull_fit(t, int(n), float(t_c))
    p = {"beta": float(beta), "eta": float(eta)}
    if not conv:
        raise FitError("censored Weibull fit did not converge (insufficient information)",
                       params=p, r=r, n=int(n))
    return FittedModel(spec, ParamVector(FamilyId.WEIBULL, **p), float(loglik), True, 0)


def censored_weibull_fit(times, n, t_c, extra=0):
    """Unvalidated core of the censored Weibull fit (also used in batch by within-sample code)."""
    t = np.asarray(times, dtype=float)
    r = t.size
    logs = np.append(np.log(t), math.log(t_c))[None, :]
    weights = np.append(np.ones(r), float(n - r))[None, :]
    beta, eta, loglik, conv, _ = _censored_shape(logs, weights, r, extra)
    return beta[0], eta[0], loglik[0], bool(conv[0])


def _censored_shape(logs, weights, r, extra):
    logs = _rows(logs)
    weights = _rows(weights)
    r = np.broadcast_to(np.asarray(r, dtype=float), (logs.shape[0],))
    s_fail = np.sum(np.where(np.arange(logs.shape[1])[None, :] < r[:, None], logs, 0.0), axis=1)
    return _weibull_shape_core(logs, weights, r, s_fail, extra)


def _weibull_shape_core(logs, weights, r, s_fail, extra):
    """Weibull profile-likelihood shape equation, row-wise.

    ``logs``/``weights`` hold the log-times of every distinct contribution:
    exact failures with weight 1 and the censoring time weighted by the number
    of survivors.  ``r`` counts exact failures and ``s_fail`` is the sum of
    their log-times.  Returns shape, scale, log-likelihood (including
    ``extra * (log(beta) - 1)``), convergence flags and iteration counts.
    """
    B = logs.shape[0]
    pos = weights > 0
    lmax = np.max(np.where(pos, logs, -np.inf), axis=1)
    shifted = np.where(pos, logs - lmax[:, None], 0.0)
    k = r + extra

    def moments(beta, idx):
        e = weights[idx] * np.exp(beta[:, None] * shifted[idx])
        tot = e.sum(axis=1)
        m1 = (e * shifted[idx]).sum(axis=1) / tot
        m2 = (e * shifted[idx] ** 2).sum(axis=1) / tot
        return tot, m1, m2 - m1 * m1

    def func(u, idx):
        beta = np.exp(u)
        _, m1, var = moments(beta, idx)
        g = k[idx] / beta + s_fail[idx] - r[idx] * (m1 + lmax[idx])
        dg = -k[idx] / beta - r[idx] * beta * np.maximum(var, 0.0)
        return g, dg

    u, conv, its = solve_decreasing(func, _full(B, -25.0), _full(B, 12.0), _full(B, 0.0))
    beta = np.exp(u)
    tot, _, _ = moments(beta, np.arange(B))
    log_eta = (np.log(tot) - np.log(r)) / beta + lmax
    loglik = r * np.log(beta) - r * beta * log_eta + (beta - 1.0) * s_fail - r
    loglik = loglik + extra * (np.log(beta) - 1.0)
    return beta, np.exp(log_eta), loglik, conv, its


def single_obs_sup(spec, common_params, y):
    """``sup`` over the varied parameter of ``f(y; theta_y)`` with the other components fixed.

    ``common_params`` maps the non-varied parameter names to values (the
    varied one, if present, is ignored).
    """
    impl = spec.impl
    y = float(y)
    if not impl.in_y_support(np.asarray(y)):
        raise SupportError(f"y={y} outside the {spec.family_id.value} support")
    p = {k: float(v) for k, v in dict(common_params).items() if k != spec.varied_param}
    p.update(spec.hyper)
    missing = [k for k in impl.names if k != spec.varied_param and k not in p]
    if missing:
        raise ParameterDomainError(f"missing common parameters {missing}")
    vals = dict(p)
    vals[spec.varied_param] = 1.0
    impl.check({k: vals.get(k) for k in impl.names})
    return float(np.exp(impl.log_g(vals) + impl.log_h(y)))

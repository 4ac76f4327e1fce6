"""Two-sample LR prediction for binomial and Poisson counts.

The data count ``X`` and the future count ``Y`` share one success
probability (or rate) under the reduced model and have separate ones under
the full model, so every ML estimate is a ratio of counts and the statistic
is a sum of ``a log(a/b)`` terms with ``0 log 0 = 0``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .calibrate import chisq_quantile


@dataclass(frozen=True)
class BinomialSetup:
    x: int
    n: int
    m: int

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        if not 0 <= self.x <= self.n:
            raise ValueError("x must lie in 0..n")


@dataclass(frozen=True)
class PoissonSetup:
    x: int
    n: float = 1.0
    m: float = 1.0

    def __post_init__(self):
        if self.x < 0:
            raise ValueError("x must be non-negative")
        if not (self.n > 0 and self.m > 0):
            raise ValueError("exposures n and m must be positive")


@dataclass(frozen=True)
class IntegerInterval:
    lo: int
    hi: int
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("lo exceeds hi")

    def __contains__(self, y):
        return self.lo <= y <= self.hi

    def to_dict(self):
        return {"lo": self.lo, "hi": self.hi, "diagnostics": dict(self.diagnostics)}


def _binomial_corrected(count, total):
    count = np.asarray(count, dtype=float)
    return count + 0.5 * (count == 0) - 0.5 * (count == total)


def binomial_neg2_log_lr(setup, y, corrected=False):
    """``-2 log Lambda`` for a future ``Binom(m, p)`` count ``y`` given ``x`` of ``n``."""
    n, m = setup.n, setup.m
    y_arr = np.asarray(y)
    if np.any(y_arr < 0) or np.any(y_arr > m):
        raise ValueError("y must lie in 0..m")
    x = np.asarray(float(setup.x))
    yv = y_arr.astype(float)
    if corrected:
        x = _binomial_corrected(x, n)
        yv = _binomial_corrected(yv, m)
    s = x + yv
    p_xy = s / (n + m)
    ll_sep = (special.xlogy(x, x / n) + special.xlogy(n - x, 1 - x / n)
              + special.xlogy(yv, yv / m) + special.xlogy(m - yv, 1 - yv / m))
    ll_pool = special.xlogy(s, p_xy) + special.xlogy(n + m - s, 1 - p_xy)
    out = np.maximum(2.0 * (ll_sep - ll_pool), 0.0)
    return float(out) if out.ndim == 0 else out


def poisson_neg2_log_lr(setup, y, corrected=False):
    """``-2 log Lambda`` for a future ``Poi(m lambda)`` count ``y`` given ``x`` from ``Poi(n lambda)``."""
    n, m = setup.n, setup.m
    y_arr = np.asarray(y)
    if np.any(y_arr < 0):
        raise ValueError("y must be non-negative")
    x = np.asarray(float(setup.x))
    yv = y_arr.astype(float)
    if corrected:
        x = x + 0.5 * (x == 0)
        yv = yv + 0.5 * (yv == 0)
    rate = (x + yv) / (n + m)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = 2.0 * (special.xlogy(x, x / (n * rate)) + special.xlogy(yv, yv / (m * rate)))
    out = np.where(x + yv > 0, out, 0.0)
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def _passing_run(ys, vals, threshold):
    """Contiguous run of ``vals <= threshold`` around the minimizer, or the argmin alone."""
    i0 = int(np.argmin(vals))
    diag = {"argmin": int(ys[i0]), "min_statistic": float(vals[i0]), "threshold": threshold}
    if vals[i0] > threshold:
        diag["below_nominal"] = True
        return IntegerInterval(int(ys[i0]), int(ys[i0]), diag)
    ok = vals <= threshold
    lo = i0
    while lo > 0 and ok[lo - 1]:
        lo -= 1
    hi = i0
    while hi < len(ys) - 1 and ok[hi + 1]:
        hi += 1
    if np.count_nonzero(ok) != hi - lo + 1:
        diag["disconnected"] = True
    return IntegerInterval(int(ys[lo]), int(ys[hi]), diag)


def _poisson_values(setup, corrected, threshold):
    """Statistic over ``0..y_max``, extending until three values past the minimum fail."""
    guess = setup.m * max(setup.x, 0.5) / setup.n
    top = max(8, int(math.ceil(2 * guess + 10 * math.sqrt(guess + 1))))
    while True:
        ys = np.arange(top + 1)
        vals = poisson_neg2_log_lr(setup, ys, corrected)
        i0 = int(np.argmin(vals))
        tail = vals[i0 + 1:]
        if tail.size >= 3 and np.all(tail[-3:] > threshold):
            return ys, vals
        top *= 2


def discrete_prediction_set(setup, level=0.95, corrected=False):
    """Integer prediction set ``{y : -2 log Lambda(x, y) <= chi2_{1, level}}``."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    threshold = chisq_quantile(1, level)
    if isinstance(setup, BinomialSetup):
        ys = np.arange(setup.m + 1)
        vals = binomial_neg2_log_lr(setup, ys, corrected)
    elif isinstance(setup, PoissonSetup):
        ys, vals = _poisson_values(setup, corrected, threshold)
    else:
        raise TypeError("setup must be a BinomialSetup or PoissonSetup")
    return _passing_run(ys, np.atleast_1d(vals), threshold)


def discrete_bound(setup, level=0.95, side="upper", corrected=False):
    """One-sided bound: the matching endpoint of the ``1 - 2 alpha`` two-sided set.

    Returns the integer bound; a lower bound of 0 (or an upper bound of ``m``
    for the binomial) is the trivial bound.
    """
    alpha = 1.0 - level
    if not 0.0 < alpha < 0.5:
        raise ValueError("one-sided level must lie in (0.5, 1)")
    interval = discrete_prediction_set(setup, 1.0 - 2.0 * alpha, corrected)
    if side == "upper":
        return interval.hi
    if side == "lower":
        return interval.lo
    raise ValueError("side must be 'upper' or 'lower'")

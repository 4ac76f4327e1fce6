"""Within-sample prediction of future failure counts from Type-I censored Weibull data.

``n`` units run to the censoring time ``t_c``; ``r`` fail at known times.  The
predictand is the number of the ``n - r`` survivors that fail in
``(t_c, t_w]``.  The reduced model ties that count to the Weibull law; the
full model frees the conditional failure probability ``p``.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import special, stats

from . import families as fam
from ._optimize import newton_maximize
from .calibrate import chisq_quantile
from .discrete import IntegerInterval, _passing_run
from .errors import FitError, NoFailuresError, SupportError


class Variant(str, Enum):
    SURVIVAL_ADJUSTED = "survival_adjusted"
    LITERAL = "literal"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"survival_adjusted": cls.SURVIVAL_ADJUSTED, "survivaladjusted": cls.SURVIVAL_ADJUSTED,
                   "adjusted": cls.SURVIVAL_ADJUSTED, "literal": cls.LITERAL,
                   "literaleq15": cls.LITERAL, "literal_eq15": cls.LITERAL}
        if key not in aliases:
            raise ValueError(f"unknown variant {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class CensoredSample:
    failure_times: tuple
    n: int
    t_c: float

    def __post_init__(self):
        t = np.sort(np.asarray(self.failure_times, dtype=float).reshape(-1))
        if not self.t_c > 0:
            raise SupportError("censoring time must be positive")
        if np.any(t <= 0) or np.any(t > self.t_c) or not np.all(np.isfinite(t)):
            raise SupportError("failure times must lie in (0, t_c]")
        if int(self.n) < t.size:
            raise SupportError("more failures than units", n=int(self.n), r=int(t.size))
        object.__setattr__(self, "failure_times", tuple(float(v) for v in t))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "t_c", float(self.t_c))

    @property
    def r(self):
        return len(self.failure_times)

    @property
    def at_risk(self):
        return self.n - self.r

    def times(self):
        return np.asarray(self.failure_times)


@dataclass(frozen=True)
class WithinSampleQuery:
    t_w: float
    level: float = 0.95
    variant: Variant = Variant.SURVIVAL_ADJUSTED

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")


def _check(sample, query):
    if not query.t_w > sample.t_c:
        raise ValueError("t_w must exceed t_c")
    if sample.r == 0:
        raise NoFailuresError("no failures before the censoring time; Weibull fit unidentifiable",
                              n=sample.n, t_c=sample.t_c)


# ---------------------------------------------------------------------------
# batched core: rows are (dataset, y) pairs with padded failure times
# ---------------------------------------------------------------------------


class _Rows:
    """Padded per-row data: failure log-times (weight 1, padding weight 0), counts and times."""

    def __init__(self, logs, mask, n, y, t_c, t_w):
        self.logs = logs
        self.mask = mask
        self.r = mask.sum(axis=1).astype(float)
        self.s_fail = np.where(mask, logs, 0.0).sum(axis=1)
        self.n = np.asarray(n, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.log_tc = np.log(t_c)
        self.log_tw = np.log(t_w)


def _reduced_objective(rows):
    """Reduced-model log-likelihood in ``z = (log beta, log eta)``."""

    def fun(z, idx):
        lb, le = z[:, 0], z[:, 1]
        beta = np.exp(lb)
        logs = rows.logs[idx]
        mask = rows.mask[idx]
        r, y, n = rows.r[idx], rows.y[idx], rows.n[idx]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            haz = np.where(mask, np.exp(beta[:, None] * (logs - le[:, None])), 0.0).sum(axis=1)
            a = np.exp(beta * (rows.log_tc[idx] - le))
            b = np.exp(beta * (rows.log_tw[idx] - le))
            log_window = -a + np.log(-np.expm1(a - b))
            val = (r * lb + (beta - 1.0) * rows.s_fail[idx] - r * beta * le - haz
                   + np.where(y > 0, y * log_window, 0.0) - (n - r - y) * b)
        return np.where(np.isfinite(val), val, -np.inf)

    return fun


def _pseudo_start(rows):
    """Weibull fit treating the ``y`` future failures as exact at the window midpoint."""
    B = rows.logs.shape[0]
    mid = np.log(0.5 * (np.exp(rows.log_tc) + np.exp(rows.log_tw)))
    mid = np.broadcast_to(mid, (B,))
    log_tw = np.broadcast_to(rows.log_tw, (B,))
    logs = np.column_stack([np.where(rows.mask, rows.logs, 0.0), mid, log_tw])
    weights = np.column_stack([rows.mask.astype(float), rows.y, rows.n - rows.r - rows.y])
    beta, eta, _, conv, _ = fam._weibull_shape_core(logs, weights, rows.r + rows.y,
                                                    rows.s_fail + rows.y * mid, 0)
    return np.column_stack([np.log(beta), np.log(eta)]), conv


def _censored_start(rows):
    B = rows.logs.shape[0]
    log_tc = np.broadcast_to(rows.log_tc, (B,))
    logs = np.column_stack([np.where(rows.mask, rows.logs, 0.0), log_tc])
    weights = np.column_stack([rows.mask.astype(float), rows.n - rows.r])
    beta, eta, loglik, conv, _ = fam._weibull_shape_core(logs, weights, rows.r, rows.s_fail, 0)
    return np.column_stack([np.log(beta), np.log(eta)]), loglik, conv


def _reduced_sup(rows):
    fun = _reduced_objective(rows)
    B = rows.logs.shape[0]
    z1, _, c1 = _censored_start(rows)
    z2, c2 = _pseudo_start(rows)
    z2 = np.where(c2[:, None] & np.all(np.isfinite(z2), axis=1)[:, None], z2, z1)
    z0 = np.concatenate([z1, z2])
    index = np.tile(np.arange(B), 2)
    res = newton_maximize(lambda z, idx: fun(z, index[idx]), z0,
                          np.array([-12.0, -60.0]), np.array([8.0, 60.0]))
    vals = np.where(res.converged, res.fun, -np.inf).reshape(2, B)
    pick = np.argmax(vals, axis=0)
    best = vals[pick, np.arange(B)]
    zbest = res.x[pick * B + np.arange(B)]
    return best, zbest, np.isfinite(best)


def _full_sup(rows, variant):
    """Full-model supremum: data part (censored or failures-only) plus binomial maximum."""
    m = rows.n - rows.r
    y = rows.y
    with np.errstate(divide="ignore", invalid="ignore"):
        p_hat = np.where(m > 0, y / np.where(m > 0, m, 1.0), 0.0)
        binom = special.xlogy(y, p_hat) + special.xlogy(m - y, 1.0 - p_hat)
    if variant is Variant.SURVIVAL_ADJUSTED:
        _, loglik, conv = _censored_start(rows)
    else:
        # failures-only likelihood; unbounded for a single failure or tied failures
        logs = np.where(rows.mask, rows.logs, 0.0)
        weights = rows.mask.astype(float)
        _, _, loglik, conv, _ = fam._weibull_shape_core(logs, weights, rows.r, rows.s_fail, 0)
        conv = conv & (rows.r >= 2)
        spread = np.where(rows.mask, rows.logs, -np.inf).max(axis=1) - np.where(
            rows.mask, rows.logs, np.inf).min(axis=1)
        conv = conv & (spread > 0)
    return loglik + binom, conv


def _rows_for(samples, t_w_list, y_lists):
    """Stack (dataset, y) rows for several samples into one padded batch."""
    width = max(1, max(s.r for s in samples))
    logs, mask, n, y, tc, tw, owner = [], [], [], [], [], [], []
    for j, (s, t_w, ys) in enumerate(zip(samples, t_w_list, y_lists)):
        ys = np.asarray(ys, dtype=float)
        row = np.zeros(width)
        row[: s.r] = np.log(s.times())
        mrow = np.zeros(width, dtype=bool)
        mrow[: s.r] = True
        k = ys.size
        logs.append(np.tile(row, (k, 1)))
        mask.append(np.tile(mrow, (k, 1)))
        n.append(np.full(k, s.n))
        y.append(ys)
        tc.append(np.full(k, s.t_c))
        tw.append(np.full(k, t_w))
        owner.append(np.full(k, j))
    cat = np.concatenate
    return _Rows(np.vstack(logs), np.vstack(mask), cat(n), cat(y), cat(tc), cat(tw)), cat(owner)


def batch_curves(samples, t_w_list, variant=Variant.SURVIVAL_ADJUSTED):
    """Statistic over ``y = 0..n-r`` for each sample; returns a list of arrays.

    Samples with ``r = n`` get ``[0.0]``.  Raises FitError when a reduced or
    full fit fails.
    """
    variant = Variant.parse(variant)
    ys = [np.arange(s.at_risk + 1) for s in samples]
    rows, owner = _rows_for(samples, t_w_list, ys)
    red, _, ok_r = _reduced_sup(rows)
    full, ok_f = _full_sup(rows, variant)
    vals = -2.0 * (red - full)
    no_risk = (rows.n - rows.r) == 0
    vals = np.where(no_risk, 0.0, vals)
    bad = ~(no_risk | (ok_r & ok_f))
    if np.any(bad):
        first = int(np.flatnonzero(bad)[0])
        raise FitError("within-sample fit failed", y=float(rows.y[first]),
                       variant=variant.value, dataset=int(owner[first]))
    return [vals[owner == j] for j in range(len(samples))]


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def within_sample_neg2_log_lr(sample, query, y):
    """``-2 log Lambda`` for ``y`` future failures (scalar or array, each in 0..n-r)."""
    _check(sample, query)
    y_arr = np.asarray(y)
    if np.any(y_arr < 0) or np.any(y_arr > sample.at_risk):
        raise ValueError("y must lie in 0..n-r")
    if sample.at_risk == 0:
        out = np.zeros(y_arr.shape)
        return float(out) if out.ndim == 0 else out
    rows, _ = _rows_for([sample], [query.t_w], [y_arr.reshape(-1)])
    red, _, ok_r = _reduced_sup(rows)
    full, ok_f = _full_sup(rows, query.variant)
    if not np.all(ok_r & ok_f):
        bad = rows.y[~(ok_r & ok_f)]
        raise FitError("within-sample fit failed", y=bad.tolist(), variant=query.variant.value)
    out = (-2.0 * (red - full)).reshape(y_arr.shape)
    return float(out) if out.ndim == 0 else out


def within_sample_curve(sample, query):
    _check(sample, query)
    return batch_curves([sample], [query.t_w], query.variant)[0]


def within_sample_interval(sample, query):
    """``{y : -2 log Lambda <= chi2_{1, level}}`` as a contiguous integer interval."""
    _check(sample, query)
    if sample.at_risk == 0:
        return IntegerInterval(0, 0, {"at_risk": 0})
    vals = within_sample_curve(sample, query)
    return _passing_run(np.arange(sample.at_risk + 1), vals, chisq_quantile(1, query.level))


def conditional_probability(beta, eta, t_c, t_w):
    """``Pr(t_c < T <= t_w | T > t_c)`` for a Weibull lifetime."""
    a = (t_c / eta) ** beta
    b = (t_w / eta) ** beta
    return -np.expm1(a - b)


def within_sample_plug_in(sample, query):
    """Plug-in interval: binomial quantiles at the censored-ML conditional probability."""
    _check(sample, query)
    fit = fam.fit_ml_type1_censored(sample.times(), sample.n, sample.t_c)
    p = conditional_probability(fit.params["beta"], fit.params["eta"], sample.t_c, query.t_w)
    alpha = 1.0 - query.level
    m = sample.at_risk
    lo = int(stats.binom.ppf(alpha / 2, m, p))
    hi = int(stats.binom.ppf(1 - alpha / 2, m, p))
    return IntegerInterval(lo, hi, {"p_hat": float(p)})


def design(beta, p_f1, expected_failures, d, eta=1.0):
    """Simulation factors to ``(n, t_c, t_w)``: ``n = E(r)/p_f1``, ``F(t_c) = p_f1``,
    ``F(t_w) = p_f1 + d``."""
    n = int(round(expected_failures / p_f1))
    t_c = eta * (-math.log1p(-p_f1)) ** (1.0 / beta)
    t_w = eta * (-math.log1p(-(p_f1 + d))) ** (1.0 / beta)
    return n, t_c, t_w

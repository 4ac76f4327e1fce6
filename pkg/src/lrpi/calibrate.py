"""Thresholds for the LR curve: parametric bootstrap, chi-square, and limit-law plug-in."""

import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np
from scipy import special

from . import lr, rng
from .errors import CalibrationError
from .families import FamilyId

MAX_FAILURE_FRACTION = 0.02

# stream labels; keep distinct so different uses of one seed never overlap
_BOOTSTRAP_STREAM = 1
_LIMIT_STREAM = 2


class Method(str, Enum):
    BOOTSTRAP = "bootstrap"
    CHISQ = "chisq"
    LIMIT = "limit"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"bootstrap": cls.BOOTSTRAP, "lrbootstrap": cls.BOOTSTRAP,
                   "chisq": cls.CHISQ, "chisquare": cls.CHISQ, "lrchisq": cls.CHISQ,
                   "limit": cls.LIMIT, "limitplugin": cls.LIMIT, "lrlimit": cls.LIMIT}
        if key not in aliases:
            raise ValueError(f"unknown calibration method {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class CalibrationSpec:
    """How to calibrate.  ``alpha`` is the miscoverage: thresholds are
    ``1 - alpha`` quantiles for two-sided use and ``alpha`` / ``1 - alpha``
    quantiles of the signed statistic for one-sided use."""

    method: Method = Method.BOOTSTRAP
    alpha: float = 0.05
    B: int = 1000
    seed: int = 0
    max_retries: int = 3
    dof: int = 1

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.method is Method.BOOTSTRAP and self.B < 100:
            raise ValueError("bootstrap calibration needs B >= 100")
        if self.method is Method.LIMIT and self.B < 1:
            raise ValueError("limit calibration needs a positive number of draws")
        if self.method is Method.CHISQ and self.dof not in (1, 2):
            raise ValueError("chi-square calibration supports 1 or 2 degrees of freedom")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


@dataclass(frozen=True)
class CalibrationResult:
    lambda_hi: float
    zeta_lo: float
    zeta_hi: float
    alpha: float
    method: str
    replicates_used: int = 0
    replicate_failures: int = 0
    seed: int = None

    def to_dict(self):
        return asdict(self)


def empirical_quantile(values, p):
    """The ``ceil(B p)``-th smallest of ``values`` (1-based)."""
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValueError("empirical_quantile of an empty sequence")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    k = max(1, math.ceil(v.size * p - 1e-12))
    return float(np.partition(v, k - 1)[k - 1])


def chisq_quantile(dof, p):
    """Chi-square inverse cdf via the inverse regularized incomplete gamma function."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if dof < 1:
        raise ValueError("dof must be positive")
    return 2.0 * float(special.gammaincinv(0.5 * dof, p))


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------


def _param_rows(spec, params, rows):
    p = {k: np.full((rows, 1), float(v)) for k, v in params.items()}
    p.update(spec.hyper)
    return p


def replicate_statistics(spec, params, n, B, key_fn, max_retries=3):
    """Bootstrap statistics for ``B`` replicates drawn from ``params``.

    ``key_fn(attempt)`` gives the Philox key for a retry round; replicate
    ``b`` always uses row ``b`` of that stream, so results do not depend on
    how the work is split.  Returns ``(neg2, signs, ok, failures)``.
    """
    impl = spec.impl
    neg2 = np.full(B, np.nan)
    signs = np.zeros(B)
    ok = np.zeros(B, dtype=bool)
    failures = 0
    pending = np.arange(B)
    for attempt in range(max_retries + 1):
        if pending.size == 0:
            break
        key = key_fn(attempt)
        U = _rows_of(key, pending, n + 1)
        draws = impl.sample(_param_rows(spec, params, pending.size), U)
        X, y = draws[:, :n], draws[:, n]
        val, good, pooled = _safe_batch(spec, X, y)
        sgn = np.zeros(pending.size)
        if np.any(good):
            sub = None if pooled is None else {k: v[good] for k, v in pooled.items()}
            sgn[good] = lr.batch_signs(spec, X[good], y[good], sub)
        neg2[pending[good]] = val[good]
        signs[pending[good]] = sgn[good]
        ok[pending[good]] = True
        failures += int(np.count_nonzero(~good))
        pending = pending[~good]
    return neg2, signs, ok, failures


def _rows_of(key, rows, width):
    """Uniform rows for arbitrary (sorted) row indices of one stream."""
    rows = np.asarray(rows)
    if rows.size and rows[-1] - rows[0] + 1 == rows.size:
        return rng.uniforms(key, int(rows[0]), rows.size, width)
    return np.vstack([rng.uniforms(key, int(r), 1, width) for r in rows])


def _safe_batch(spec, X, y):
    degenerate = np.ptp(X, axis=1) == 0 if spec.family_id not in (
        FamilyId.EXPONENTIAL, FamilyId.UNIFORM, FamilyId.NORMAL_KNOWN_SIGMA) else np.zeros(len(y), bool)
    with np.errstate(all="ignore"):
        val, good, pooled = lr.batch_neg2(spec, X, y)
    return val, good & ~degenerate, pooled


def bootstrap_calibrate(ctx, cal):
    """Parametric-bootstrap thresholds for the two-sided and signed statistics.

    Each replicate draws ``n`` data values and one predictand from the data
    fit, evaluates ``-2 log Lambda`` and its sign relative to the replicate's
    own mode, and the thresholds are empirical quantiles of the results.
    """
    if cal.method is not Method.BOOTSTRAP:
        raise CalibrationError("bootstrap_calibrate needs the bootstrap method")
    return bootstrap_thresholds(ctx.spec, ctx.data_fit.params, ctx.n, cal)


def bootstrap_thresholds(spec, params, n, cal, labels=()):
    key_fn = lambda attempt: rng.stream_key(cal.seed, _BOOTSTRAP_STREAM, *labels, attempt)
    neg2, signs, ok, failures = replicate_statistics(spec, params, n, cal.B, key_fn,
                                                     cal.max_retries)
    unresolved = int(np.count_nonzero(~ok))
    if failures > MAX_FAILURE_FRACTION * cal.B or unresolved:
        raise CalibrationError("too many bootstrap replicates failed", failures=failures,
                               unresolved=unresolved, B=cal.B)
    zeta = np.where(signs > 0, 1.0, -1.0) * neg2
    return CalibrationResult(
        lambda_hi=empirical_quantile(neg2, 1.0 - cal.alpha),
        zeta_lo=empirical_quantile(zeta, cal.alpha),
        zeta_hi=empirical_quantile(zeta, 1.0 - cal.alpha),
        alpha=cal.alpha, method=cal.method.value, replicates_used=int(ok.sum()),
        replicate_failures=failures, seed=cal.seed)


def bootstrap_replicates(ctx, cal):
    """Raw replicate statistics ``(neg2, zeta)`` behind :func:`bootstrap_calibrate`."""
    key_fn = lambda attempt: rng.stream_key(cal.seed, _BOOTSTRAP_STREAM, attempt)
    neg2, signs, ok, _ = replicate_statistics(ctx.spec, ctx.data_fit.params, ctx.n, cal.B,
                                              key_fn, cal.max_retries)
    return neg2[ok], (np.where(signs > 0, 1.0, -1.0) * neg2)[ok]


# ---------------------------------------------------------------------------
# chi-square and limit law
# ---------------------------------------------------------------------------


def chisq_calibrate(cal):
    """Wilks calibration: two-sided ``chi2_{dof, 1-alpha}``; one-sided via the signed root."""
    lam = chisq_quantile(cal.dof, 1.0 - cal.alpha)
    one = chisq_quantile(cal.dof, 1.0 - 2.0 * cal.alpha) if cal.alpha < 0.5 else 0.0
    return CalibrationResult(lam, -one, one, cal.alpha, cal.method.value, seed=cal.seed)


_LIMIT_FAMILIES = (FamilyId.UNIFORM, FamilyId.GAMMA, FamilyId.EXPONENTIAL, FamilyId.NORMAL,
                   FamilyId.NORMAL_KNOWN_SIGMA, FamilyId.TWO_PARAM_EXPONENTIAL,
                   FamilyId.WEIBULL)


def limit_variable(spec, params, y, printed_gamma=False):
    """``-2 log[f(y; theta) / sup_varied f(y; ...)]`` and its sign about the zero point."""
    impl = spec.impl
    p = {k: float(v) for k, v in params.items()}
    p.update(spec.hyper)
    y = np.asarray(y, dtype=float)
    val = -2.0 * (impl.logpdf(y, p) - impl.log_g(p) - impl.log_h(y))
    if printed_gamma:
        if spec.family_id is not FamilyId.GAMMA:
            raise ValueError("the printed-form option only applies to the gamma family")
        a = p["alpha"]
        val = val - 2.0 * a * math.log(a)
    sign = np.where(y > impl.mode_point(p), 1.0, -1.0)
    return val, sign


def limit_calibrate(spec, fitted, alpha, draws=100_000, seed=0, printed_gamma=False):
    """Quantiles of the large-``n`` limit of the statistic with the fitted parameters plugged in.

    The uniform family uses the exact chi-square(2) law (its signed statistic
    is never positive).  Other families simulate the limit variable.
    """
    if spec.family_id not in _LIMIT_FAMILIES:
        raise CalibrationError(f"no limit calibration for {spec.family_id.value}")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    params = fitted.params if hasattr(fitted, "params") else fitted
    if spec.family_id is FamilyId.UNIFORM:
        lam = chisq_quantile(2, 1.0 - alpha)
        return CalibrationResult(lam, -chisq_quantile(2, 1.0 - alpha), 0.0, alpha,
                                 Method.LIMIT.value, seed=seed)
    u = rng.uniforms(rng.stream_key(seed, _LIMIT_STREAM), 0, 1, int(draws))[0]
    p = {k: float(v) for k, v in params.items()}
    p.update(spec.hyper)
    y = spec.impl.ppf(u, p)
    val, sign = limit_variable(spec, params, y, printed_gamma=printed_gamma)
    zeta = sign * val
    return CalibrationResult(
        lambda_hi=empirical_quantile(val, 1.0 - alpha),
        zeta_lo=empirical_quantile(zeta, alpha),
        zeta_hi=empirical_quantile(zeta, 1.0 - alpha),
        alpha=alpha, method=Method.LIMIT.value, replicates_used=int(draws), seed=seed)


def calibrate(ctx, cal):
    """Dispatch on ``cal.method``."""
    if cal.method is Method.BOOTSTRAP:
        return bootstrap_calibrate(ctx, cal)
    if cal.method is Method.CHISQ:
        return chisq_calibrate(cal)
    return limit_calibrate(ctx.spec, ctx.data_fit, cal.alpha, draws=cal.B, seed=cal.seed)


def batch_se(values, p, batches=20):
    """Monte Carlo SE of an empirical quantile from splitting replicates into batches."""
    v = np.asarray(values, dtype=float)
    parts = np.array_split(v, batches)
    qs = np.array([empirical_quantile(q, p) for q in parts])
    return float(np.std(qs, ddof=1) / math.sqrt(batches))


__all__ = ["Method", "CalibrationSpec", "CalibrationResult", "empirical_quantile",
           "chisq_quantile", "bootstrap_calibrate", "bootstrap_thresholds",
           "bootstrap_replicates", "chisq_calibrate", "limit_calibrate", "limit_variable",
           "calibrate", "batch_se", "replicate_statistics"]

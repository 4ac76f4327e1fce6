"""The prediction likelihood-ratio statistic and its signed version.

For data ``x_1..x_n`` and a candidate predictand value ``y`` the statistic
compares the reduced model (data and predictand share one parameter vector)
with the full model in which the predictand's varied component is free:

    -2 log Lambda(x, y) = -2 [ l_pooled(x, y) - l_full(x) - log h(y) ]

where ``l_pooled`` is the ordinary ML log-likelihood of the pooled sample
and ``l_full + log h(y)`` the full-model supremum (see ``families``).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from . import families as fam
from .errors import DesignError, FitError, SupportError
from .families import FamilyId, FamilySpec, ParamVector

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
MAX_DOUBLINGS = 60


@dataclass(frozen=True)
class LrContext:
    """A prepared prediction problem.  Immutable; safe to share between threads."""

    spec: FamilySpec
    data: np.ndarray
    data_fit: fam.FittedModel
    full_fit: fam.FittedModel
    y0: float
    support_lo: float
    support_hi: float
    multimodal: bool = False
    warnings: tuple = field(default=())

    @property
    def n(self):
        return int(self.data.size)

    @property
    def scale(self):
        """Natural length scale of the data, used to size brackets."""
        spread = float(np.std(self.data))
        return max(spread, 1e-3 * abs(self.y0), 1e-12)

    def curve(self, y):
        return neg2_log_lr(self, y)


@dataclass(frozen=True)
class LrCurvePoint:
    y: float
    neg2_log_lr: float
    signed: float


# ---------------------------------------------------------------------------
# batch evaluation (shared by contexts and bootstrap replicates)
# ---------------------------------------------------------------------------


def _warm_starts(spec, params):
    if spec.family_id is not FamilyId.GENERALIZED_GAMMA or params is None:
        return None
    return [np.column_stack([np.log(params["sigma"]), params["lam"]])]


def pooled_fit(spec, X, y, warm=None):
    """Ordinary ML fits of the pooled rows ``(X[b], y[b])``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    pooled = np.column_stack([X, y])
    impl = spec.impl
    if spec.family_id is FamilyId.GENERALIZED_GAMMA:
        starts = impl.starts(np.log(pooled))
        extra = _warm_starts(spec, warm)
        if extra is not None:
            starts = extra + starts[:2]
        return impl.fit(pooled, 0, spec.hyper, starts=starts)
    return impl.fit(pooled, 0, spec.hyper)


def full_fit_batch(spec, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return spec.impl.fit(X, 1, spec.hyper)


def batch_neg2(spec, X, y, full=None, warm=None):
    """Fast-path statistic for rows ``X`` and predictands ``y``.

    Returns ``(neg2, ok, pooled_params)``; ``ok`` is False where an ML fit failed.
    Closed forms are used where they exist.
    """
    impl = spec.impl
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if impl.has_closed_lr:
        with np.errstate(divide="ignore", invalid="ignore"):
            val = impl.closed_neg2(X, y, spec.hyper)
        return val, np.isfinite(val), None
    if full is None:
        full = full_fit_batch(spec, X)
    pooled = pooled_fit(spec, X, y, warm=warm if warm is not None else full.params)
    val = -2.0 * (pooled.loglik - full.loglik - impl.log_h(y))
    ok = pooled.converged & full.converged & np.isfinite(val)
    return val, ok, pooled.params


def batch_signs(spec, X, y, pooled_params=None):
    """Sign of ``y - y0(X)`` for each row.

    Uses the closed-form mode where one exists; otherwise the sign of the
    curve's slope at ``y``, which by the envelope theorem is the sign of
    ``y - m(theta_pooled)`` with ``m`` the point where the density most
    exceeds its single-observation supremum.  The two agree whenever the
    curve is unimodal.
    """
    impl = spec.impl
    y = np.asarray(y, dtype=float).reshape(-1)
    y0 = impl.y0_closed(X)
    if y0 is not None:
        return np.where(y > y0, 1.0, np.where(y < y0, -1.0, 0.0))
    if pooled_params is None:
        pooled_params = pooled_fit(spec, X, y).params
    m = impl.mode_point(pooled_params)
    return np.sign(y - m)


# ---------------------------------------------------------------------------
# contexts
# ---------------------------------------------------------------------------


def prepare(spec, data, locate_mode=True):
    """Fit the data, cache the full-model fit and locate the curve's mode ``y0``."""
    if not isinstance(spec, FamilySpec):
        spec = FamilySpec(spec)
    x = fam.as_dataset(spec, data).copy()
    x.setflags(write=False)
    data_fit = fam.fit_ml(spec, x)
    full = fam.fit_full_model(spec, x)
    impl = spec.impl
    ctx = LrContext(spec, x, data_fit, full, float(impl.center(x)), impl.y_lo, impl.y_hi)
    if not locate_mode:
        return ctx
    y0_closed = impl.y0_closed(x[None, :])
    warnings = []
    if y0_closed is not None:
        y0 = float(y0_closed[0])
    else:
        try:
            y0 = _fixed_point_mode(ctx)
        except FitError:
            y0 = None
        if y0 is None:
            warnings.append("fixed-point mode search failed; used golden-section search")
            y0 = mode_y0(ctx)
    ctx = _replace(ctx, y0=y0)
    if impl.y0_closed(x[None, :]) is None and _detect_multimodal(ctx):
        warnings.append("LR curve appears multimodal")
        ctx = _replace(ctx, multimodal=True)
    return _replace(ctx, warnings=tuple(warnings))


def _replace(ctx, **kw):
    import dataclasses

    return dataclasses.replace(ctx, **kw)


def _params_dict(fitted):
    p = {k: np.array([v]) for k, v in fitted.params.items()}
    p.update({k: np.array([v]) for k, v in fitted.spec.hyper.items()})
    return p


def _fixed_point_mode(ctx, tol=1e-13, max_iter=200):
    impl = ctx.spec.impl
    y = float(impl.mode_point(_params_dict(ctx.data_fit))[0])
    X = ctx.data[None, :]
    for _ in range(max_iter):
        fb = pooled_fit(ctx.spec, X, [y], warm=_params_dict(ctx.full_fit))
        if not fb.converged[0]:
            raise FitError("pooled fit failed during mode search", y=y)
        y_new = float(impl.mode_point(fb.params)[0])
        if abs(y_new - y) <= tol * max(1.0, abs(y)):
            return y_new
        y = y_new
    return None


def _check_y(ctx, y):
    y = np.asarray(y, dtype=float)
    if not np.all(ctx.spec.impl.in_y_support(y)):
        raise SupportError(f"predictand value outside the {ctx.spec.family_id.value} support",
                           y=y.tolist() if y.ndim else float(y))
    return y


def neg2_log_lr(ctx, y, path="auto"):
    """``-2 log Lambda_n(x, y)`` for scalar or array ``y``.

    ``path`` selects ``"closed"`` (exact-case formulas), ``"fast"`` (vectorized
    profile-equation fits), ``"generic"`` (pooled ``fit_ml`` plus a general
    numerical maximization of the full model) or ``"auto"`` (closed when
    available, else fast).
    """
    y = _check_y(ctx, y)
    scalar = y.ndim == 0
    ys = y.reshape(-1)
    impl = ctx.spec.impl
    if path == "auto":
        path = "closed" if impl.has_closed_lr else "fast"
    if path == "closed":
        if not impl.has_closed_lr:
            raise ValueError(f"no closed form for {ctx.spec.family_id.value}")
        with np.errstate(divide="ignore"):
            out = impl.closed_neg2(ctx.data[None, :], ys, ctx.spec.hyper)
    elif path == "fast":
        X = np.broadcast_to(ctx.data, (ys.size, ctx.n))
        full = fam.FitBatch({k: np.full(ys.size, v) for k, v in _params_dict(ctx.full_fit).items()},
                            np.full(ys.size, ctx.full_fit.log_likelihood),
                            np.ones(ys.size, bool), np.zeros(ys.size, int))
        fit_spec = ctx.spec
        if impl.has_closed_lr:
            full = full_fit_batch(fit_spec, X)
            pooled = pooled_fit(fit_spec, X, ys)
            out = -2.0 * (pooled.loglik - full.loglik - impl.log_h(ys))
            ok = pooled.converged
        else:
            out, ok, _ = batch_neg2(fit_spec, X, ys, full=full)
        if not np.all(ok):
            bad = ys[~ok]
            raise FitError("pooled ML fit failed", y=bad.tolist())
    elif path == "generic":
        out = np.array([_generic_neg2(ctx, v) for v in ys])
    else:
        raise ValueError(f"unknown path {path!r}")
    return float(out[0]) if scalar else out


def signed_lr(ctx, y, path="auto"):
    """``(-1)^{I(y <= y0)} * [-2 log Lambda]``: nondecreasing in ``y`` on a unimodal curve."""
    y = _check_y(ctx, y)
    val = neg2_log_lr(ctx, y, path=path)
    out = np.where(np.asarray(y) <= ctx.y0, -1.0, 1.0) * val
    return float(out) if np.ndim(out) == 0 else out


def curve_points(ctx, ys):
    ys = np.asarray(ys, dtype=float)
    vals = neg2_log_lr(ctx, ys)
    signed = np.where(ys <= ctx.y0, -1.0, 1.0) * vals
    return [LrCurvePoint(float(a), float(b), float(c)) for a, b, c in zip(ys, vals, signed)]


# ---------------------------------------------------------------------------
# full model
# ---------------------------------------------------------------------------


def joint_full_ml(ctx, y, path="fast"):
    """ML estimates in the enlarged model: common parameters and the predictand's varied value.

    Returns ``(params, varied_y)`` where ``params`` is the data-side parameter
    vector.  ``path="numeric"`` maximizes the profiled full objective with a
    general-purpose optimizer instead of the family's profile equations.
    """
    y = float(_check_y(ctx, y))
    if path == "numeric":
        params, _ = _full_numeric(ctx.spec, ctx.data)
    else:
        params = ctx.full_fit.params
    p = dict(params)
    p.update(ctx.spec.hyper)
    p_arr = {k: np.asarray(v) for k, v in p.items()}
    varied_y = float(ctx.spec.impl.varied_hat(y, p_arr))
    return params, varied_y


def full_log_likelihood(ctx, y):
    """Maximized full-model log-likelihood at predictand ``y``."""
    y = float(_check_y(ctx, y))
    return ctx.full_fit.log_likelihood + float(ctx.spec.impl.log_h(y))


_FREE = {
    FamilyId.NORMAL: (("mu", "id"), ("sigma", "log")),
    FamilyId.NORMAL_KNOWN_SIGMA: (("mu", "id"),),
    FamilyId.EXPONENTIAL: (("theta", "log"),),
    FamilyId.TWO_PARAM_EXPONENTIAL: (("beta", "log"),),
    FamilyId.UNIFORM: (),
    FamilyId.GAMMA: (("alpha", "log"), ("beta", "log")),
    FamilyId.WEIBULL: (("beta", "log"), ("eta", "log")),
    FamilyId.GENERALIZED_GAMMA: (("mu", "id"), ("sigma", "log"), ("lam", "id")),
}


def _full_numeric(spec, x):
    """Maximize ``sum log f(x_i; theta) + log g(common(theta))`` with scipy, from the data fit.

    Order-statistic parameters (uniform upper end, two-parameter exponential
    location) sit on the boundary ``x_(n)`` / ``x_(1)`` and are fixed there.
    """
    impl = spec.impl
    start = fam.fit_ml(spec, x).params
    fixed = {}
    if spec.family_id is FamilyId.UNIFORM:
        fixed["theta"] = float(np.max(x))
    if spec.family_id is FamilyId.TWO_PARAM_EXPONENTIAL:
        fixed["mu"] = float(np.min(x))
    free = _FREE[spec.family_id]

    def unpack(z):
        p = dict(fixed)
        for (name, kind), v in zip(free, z):
            p[name] = math.exp(v) if kind == "log" else v
        p.update(spec.hyper)
        return p

    def objective(z):
        p = unpack(z)
        with np.errstate(all="ignore"):
            val = np.sum(impl.logpdf(x, p)) + impl.log_g(p)
        val = float(val)
        return -val if np.isfinite(val) else 1e300

    z0 = [math.log(start[name]) if kind == "log" else start[name] for name, kind in free]
    if free:
        res = optimize.minimize(objective, z0, method="BFGS", options={"gtol": 1e-10})
        res = optimize.minimize(objective, res.x, method="Nelder-Mead",
                                options={"xatol": 1e-11, "fatol": 1e-13, "maxiter": 20000})
        z = res.x
    else:
        z = []
    p = unpack(z)
    params = ParamVector(spec.family_id, **{k: p[k] for k in impl.names})
    return params, -objective(z)


def _generic_neg2(ctx, y):
    spec = ctx.spec
    pooled = fam.fit_ml(spec, np.append(ctx.data, y))
    _, full_const = _full_numeric(spec, ctx.data)
    return -2.0 * (pooled.log_likelihood - full_const - float(spec.impl.log_h(y)))


# ---------------------------------------------------------------------------
# mode search
# ---------------------------------------------------------------------------


def _expand_bracket(f, c, d, lo_bound, hi_bound):
    """Downhill bracket ``a < b < e`` with ``f(b) <= min(f(a), f(e))``, doubling steps."""
    fc = f(c)

    def step_out(direction):
        nonlocal c, fc
        dist = d
        for _ in range(MAX_DOUBLINGS):
            p = c + direction * dist
            if direction < 0 and lo_bound == 0.0 and p <= 0:
                p = c / 2.0
            fp = f(p)
            if fp > fc:
                return p
            c, fc = p, fp
            dist *= 2.0
        return p

    a = step_out(-1.0)
    e = step_out(+1.0)
    a = step_out(-1.0) if f(a) <= fc else a
    return a, c, e


def mode_y0(ctx, tol=1e-10):
    """Minimizer of the LR curve by golden-section search on an expanding bracket.

    The bracket starts at the family's natural centre (sample mean, or the
    sample maximum for the uniform) and grows geometrically (factor 2, at
    most 60 doublings).
    """
    f = lambda v: neg2_log_lr(ctx, v)
    c = float(ctx.spec.impl.center(ctx.data))
    d = ctx.scale
    a, c, b = _expand_bracket(f, c, d, ctx.support_lo, ctx.support_hi)
    width = tol * max(1.0, abs(c), d)
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(400):
        if b - a <= width:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)


def _detect_multimodal(ctx, points=64, reach=8.0):
    """Coarse scan for more than one local minimum of the curve around ``y0``."""
    lo = ctx.y0 - reach * ctx.scale
    hi = ctx.y0 + reach * ctx.scale
    if ctx.support_lo == 0.0:
        lo = max(lo, ctx.y0 * 1e-3)
    grid = np.linspace(lo, hi, points)
    try:
        vals = neg2_log_lr(ctx, grid)
    except FitError:
        return False
    diff = np.diff(vals)
    tol = 1e-9 * (1.0 + np.abs(vals[1:]))
    sgn = np.sign(np.where(np.abs(diff) < tol, 0.0, diff))
    sgn = sgn[sgn != 0]
    changes = np.count_nonzero(np.diff(sgn) != 0)
    return changes > 1


# ---------------------------------------------------------------------------
# simple linear regression
# ---------------------------------------------------------------------------


def regression_neg2_log_lr(covariates, responses, x_new, y):
    """LR statistic for a new response at ``x_new`` under simple normal linear regression.

    Equals ``(n+1) log(1 + T**2/(n-2))`` with ``T`` the studentized prediction
    residual of ``y``.
    """
    xs = np.asarray(covariates, dtype=float)
    ys = np.asarray(responses, dtype=float)
    n = xs.size
    if n < 3 or ys.size != n:
        raise DesignError("need at least 3 paired observations", n=int(n))
    xbar = xs.mean()
    sxx = float(np.sum((xs - xbar) ** 2))
    if sxx == 0.0:
        raise DesignError("covariates are all equal")
    b1 = float(np.sum((xs - xbar) * (ys - ys.mean()))) / sxx
    b0 = ys.mean() - b1 * xbar
    rss = float(np.sum((ys - b0 - b1 * xs) ** 2))
    s2 = rss / (n - 2)
    resid = y - b0 - b1 * x_new
    se = math.sqrt(s2 * (1.0 + 1.0 / n + (x_new - xbar) ** 2 / sxx))
    T = resid / se
    return (n + 1) * math.log1p(T * T / (n - 2))


def t_statistic(data, y):
    """Studentized prediction statistic ``(xbar - y) / (s sqrt(1 + 1/n))``."""
    x = np.asarray(data, dtype=float)
    n = x.size
    s = float(np.std(x, ddof=1))
    return (x.mean() - y) / (s * math.sqrt(1.0 + 1.0 / n))


def student_t_quantile(df, p):
    return float(special.stdtrit(df, p))

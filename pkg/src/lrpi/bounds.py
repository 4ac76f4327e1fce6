"""Turn calibrated thresholds into prediction intervals and one-sided bounds.

The region ``{y : -2 log Lambda(x, y) <= lambda}`` is an interval around the
mode ``y0`` when the curve is unimodal, so each endpoint is one root of
``curve(y) - lambda`` found after expanding a bracket geometrically away from
``y0``.  One-sided bounds solve ``zeta(y) = threshold`` on the side of ``y0``
given by the threshold's sign.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import calibrate as cal_mod
from . import lr
from .calibrate import CalibrationSpec, Method
from .errors import FitError, UnboundedSideError

MAX_DOUBLINGS = 60
SCAN_POINTS = 4096
MAX_ROOT_ITER = 200


@dataclass(frozen=True)
class PredictionResult:
    lower: float
    upper: float
    level: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("lower endpoint exceeds upper endpoint")

    def contains(self, y):
        return self.lower <= y <= self.upper

    def to_dict(self):
        return {"lower": self.lower, "upper": self.upper, "level": self.level,
                "method": self.method, "diagnostics": dict(self.diagnostics)}


def _safe_curve(ctx):
    """Curve evaluator that maps failed pooled fits to +inf (outside every region)."""

    def f(y):
        try:
            return lr.neg2_log_lr(ctx, y)
        except FitError:
            return math.inf

    return f


def _side_root(ctx, level_value, direction, f=None):
    """Point on one side of ``y0`` where the curve first reaches ``level_value``.

    Returns ``(y, at_boundary, iterations, expansions)``; ``at_boundary`` means
    the curve stays below the level all the way to the support edge.
    """
    f = f or _safe_curve(ctx)
    y0 = ctx.y0
    if level_value <= 0.0 or f(y0) >= level_value:
        # thresholds below the rounding noise at the mode
        return y0, False, 0, 0
    edge = ctx.support_lo if direction < 0 else ctx.support_hi
    step = ctx.scale
    inside = y0
    for expansions in range(1, MAX_DOUBLINGS + 1):
        cand = y0 + direction * step
        if math.isfinite(edge) and (cand - edge) * direction >= 0:
            # past the support edge: close in on it by halving instead
            cand = 0.5 * (inside + edge)
            if cand == inside:
                return edge, True, 0, expansions
        if f(cand) > level_value:
            outside = cand
            break
        inside = cand
        step *= 2.0
    else:
        if math.isfinite(edge):
            return edge, True, 0, expansions
        raise UnboundedSideError("LR curve never reaches the threshold",
                                 side="upper" if direction > 0 else "lower",
                                 threshold=level_value, y0=y0, reached=inside)
    xtol = 1e-9 * (1.0 + abs(y0))
    g = lambda y: f(y) - level_value
    root, info = optimize.brentq(g, min(inside, outside), max(inside, outside), xtol=xtol,
                                 rtol=4 * np.finfo(float).eps, maxiter=MAX_ROOT_ITER,
                                 full_output=True, disp=False)
    if not info.converged:
        raise UnboundedSideError("root finder did not converge", threshold=level_value)
    its = int(info.iterations)
    if abs(g(root)) > 1e-7 * max(1.0, level_value):
        # steep curve near a support edge: an absolute y tolerance is too loose
        lo_, hi_ = min(inside, outside), max(inside, outside)
        root, info = optimize.brentq(g, lo_, hi_, xtol=max(abs(root) * 1e-14, 1e-300),
                                     rtol=4 * np.finfo(float).eps, maxiter=MAX_ROOT_ITER,
                                     full_output=True, disp=False)
        its += int(info.iterations)
    return float(root), False, its, expansions


def _scan_grid(ctx, lo_edge, hi_edge):
    """Linear grid over the bracket merged with grids geometric in the distance to ``y0``.

    The curve can be steep near the mode and near a support edge while the
    bracket is very wide, so a linear grid alone misses narrow components.
    """
    y0 = ctx.y0
    half = SCAN_POINTS // 4
    parts = [np.linspace(lo_edge, hi_edge, SCAN_POINTS // 2), [y0]]
    for edge in (lo_edge, hi_edge):
        reach = abs(edge - y0)
        if reach > 0:
            small = min(reach, ctx.scale) * 1e-6
            parts.append(y0 + np.sign(edge - y0) * np.geomspace(small, reach, half))
    grid = np.unique(np.concatenate(parts))
    grid = grid[(grid >= lo_edge) & (grid <= hi_edge)]
    if ctx.support_lo == 0.0:
        grid = grid[grid > 0]
    return grid


def _refine(f, threshold, a, b):
    """Crossing of ``threshold`` between grid neighbours ``a`` and ``b``."""
    g = lambda y: f(y) - threshold
    try:
        return float(optimize.brentq(g, a, b, xtol=max(abs(a), abs(b)) * 1e-14 + 1e-300,
                                     maxiter=MAX_ROOT_ITER))
    except ValueError:
        return float(a if g(a) <= 0 else b)


def _scan_region(ctx, threshold):
    """Dense scan for a possibly disconnected region.

    Returns ``(components, lower_at_boundary, upper_at_boundary)``.
    """
    f = _safe_curve(ctx)
    lo_edge, lo_b, _, _ = _side_root(ctx, 2 * threshold + 1.0, -1, f)
    hi_edge, hi_b, _, _ = _side_root(ctx, 2 * threshold + 1.0, +1, f)
    grid = _scan_grid(ctx, lo_edge, hi_edge)
    try:
        vals = lr.neg2_log_lr(ctx, grid)
    except FitError:
        vals = np.array([f(v) for v in grid])
    inside = vals <= threshold
    comps = []
    start = None
    for i, flag in enumerate(inside):
        if flag and start is None:
            start = grid[0] if i == 0 else _refine(f, threshold, grid[i - 1], grid[i])
        if not flag and start is not None:
            comps.append((float(start), _refine(f, threshold, grid[i - 1], grid[i])))
            start = None
    if start is not None:
        comps.append((float(start), float(hi_edge if hi_b else grid[-1])))
    if not comps:
        return [(ctx.y0, ctx.y0)], False, False
    lo_b = lo_b and bool(inside[0])
    if lo_b:
        comps[0] = (float(lo_edge), comps[0][1])
    return comps, lo_b, hi_b and bool(inside[-1])


def two_sided_interval(ctx, threshold, level=None, method=""):
    """``{y : -2 log Lambda(x, y) <= threshold}`` as ``[lower, upper]``."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    diag = {"y0": ctx.y0, "threshold": float(threshold), "multimodal": ctx.multimodal}
    if ctx.multimodal:
        comps, lo_b, hi_b = _scan_region(ctx, threshold)
        diag.update(components=comps, lower_at_boundary=lo_b, upper_at_boundary=hi_b)
        return PredictionResult(comps[0][0], comps[-1][1], level, method, diag)
    f = _safe_curve(ctx)
    lo, lo_b, lo_it, lo_ex = _side_root(ctx, threshold, -1, f)
    hi, hi_b, hi_it, hi_ex = _side_root(ctx, threshold, +1, f)
    diag.update(lower_at_boundary=lo_b, upper_at_boundary=hi_b,
                iterations=lo_it + hi_it, expansions=lo_ex + hi_ex)
    return PredictionResult(lo, hi, level, method, diag)


def _zeta_root(ctx, zeta_threshold, f=None):
    direction = 1 if zeta_threshold >= 0 else -1
    return _side_root(ctx, abs(zeta_threshold), direction, f)


def one_sided_bound(ctx, zeta_threshold, side="upper", level=None):
    """The value where the signed statistic equals ``zeta_threshold``.

    An upper bound is ``sup{y : zeta(y) <= t}`` and a lower bound
    ``inf{y : zeta(y) >= t}``; for a unimodal curve both are the single
    root of ``zeta(y) = t``, which lies above ``y0`` when ``t >= 0`` and below
    it otherwise.
    """
    if side not in ("upper", "lower"):
        raise ValueError("side must be 'upper' or 'lower'")
    y, _, _, _ = _zeta_root(ctx, zeta_threshold)
    return y


def one_sided_result(ctx, zeta_threshold, side, level=None, method=""):
    y, at_b, its, exp = _zeta_root(ctx, zeta_threshold)
    diag = {"y0": ctx.y0, "threshold": float(zeta_threshold), "multimodal": ctx.multimodal,
            "at_boundary": at_b, "iterations": its, "expansions": exp}
    if side == "upper":
        return PredictionResult(ctx.support_lo, y, level, method, diag)
    return PredictionResult(y, ctx.support_hi, level, method, diag)


def equal_tail_interval(ctx, zeta_lo, zeta_hi, level=None, method=""):
    """Two one-sided bounds composed into ``[lower(zeta_lo), upper(zeta_hi)]``."""
    f = _safe_curve(ctx)
    lo, lo_b, _, _ = _zeta_root(ctx, zeta_lo, f)
    hi, hi_b, _, _ = _zeta_root(ctx, zeta_hi, f)
    diag = {"y0": ctx.y0, "zeta_lo": float(zeta_lo), "zeta_hi": float(zeta_hi),
            "lower_at_boundary": lo_b, "upper_at_boundary": hi_b}
    return PredictionResult(min(lo, hi), max(lo, hi), level, method, diag)


def predict(spec, data, level=0.95, side="two-sided", method="bootstrap", B=1000, seed=0,
            dof=1, equal_tail=False, ctx=None):
    """Fit, calibrate and invert in one call.

    ``side`` is ``"two-sided"``, ``"upper"`` or ``"lower"``.  Two-sided
    intervals use the ``1 - alpha`` threshold of ``-2 log Lambda`` unless
    ``equal_tail`` asks for two ``1 - alpha/2`` one-sided bounds.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    ctx = ctx or lr.prepare(spec, data)
    alpha = 1.0 - level
    method = Method.parse(method)
    if side == "two-sided" and equal_tail:
        alpha = alpha / 2.0
    cspec = CalibrationSpec(method, alpha, B=B, seed=seed, dof=dof)
    cal = cal_mod.calibrate(ctx, cspec)
    if side == "two-sided":
        if equal_tail:
            res = equal_tail_interval(ctx, cal.zeta_lo, cal.zeta_hi, level, method.value)
        else:
            res = two_sided_interval(ctx, cal.lambda_hi, level, method.value)
    elif side == "upper":
        res = one_sided_result(ctx, cal.zeta_hi, "upper", level, method.value)
    elif side == "lower":
        res = one_sided_result(ctx, cal.zeta_lo, "lower", level, method.value)
    else:
        raise ValueError("side must be 'two-sided', 'upper' or 'lower'")
    res.diagnostics["calibration"] = cal.to_dict()
    return res

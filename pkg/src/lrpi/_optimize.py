"""Vectorized optimizers that solve many independent small problems at once.

Bootstrap calibration needs thousands of ML fits per dataset; running them as
rows of one numpy batch is what keeps the package usable on a single core.
"""

from typing import NamedTuple

import numpy as np

MAX_ITER = 200
FTOL = 1e-10
GTOL = 1e-8


class BatchResult(NamedTuple):
    x: np.ndarray
    fun: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray


def solve_decreasing(func, lo, hi, x0, xtol=1e-13, max_iter=MAX_ITER):
    """Root of a strictly decreasing function, row-wise, by safeguarded Newton.

    ``func(x, idx)`` returns ``(g, dg)`` for the rows ``idx``.  Each row must
    satisfy ``g(lo) > 0 > g(hi)``; rows where that fails are reported as
    not converged (their ``x`` is the violating bracket end).
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    x = np.clip(np.array(x0, dtype=float), lo, hi)
    size = x.shape[0]
    converged = np.zeros(size, dtype=bool)
    iterations = np.zeros(size, dtype=int)

    idx_all = np.arange(size)
    g_lo, _ = func(lo, idx_all)
    g_hi, _ = func(hi, idx_all)
    bad_lo = ~(g_lo > 0)
    bad_hi = ~(g_hi < 0)
    x[bad_lo] = lo[bad_lo]
    x[bad_hi & ~bad_lo] = hi[bad_hi & ~bad_lo]
    active = ~(bad_lo | bad_hi)

    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xi = x[idx]
        g, dg = func(xi, idx)
        pos = g > 0
        lo[idx] = np.where(pos, xi, lo[idx])
        hi[idx] = np.where(pos, hi[idx], xi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = g / dg
        x_new = xi - step
        outside = ~np.isfinite(x_new) | (x_new <= lo[idx]) | (x_new >= hi[idx])
        x_new = np.where(outside, 0.5 * (lo[idx] + hi[idx]), x_new)
        done = (np.abs(x_new - xi) <= xtol * (1.0 + np.abs(xi))) | (g == 0)
        done |= (hi[idx] - lo[idx]) <= xtol * (1.0 + np.abs(xi))
        x[idx] = x_new
        iterations[idx] = it
        converged[idx[done]] = True
        active[idx[done]] = False
    return x, converged, iterations


def _fd_derivatives(fun, x, idx, f0, h):
    """Central-difference gradient and Hessian for each row of ``x``."""
    m, d = x.shape
    offsets = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        offsets += [e, -e]
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    for i, j in pairs:
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            e = np.zeros(d)
            e[i] = si * h
            e[j] = sj * h
            offsets.append(e)
    offsets = np.array(offsets)
    k = offsets.shape[0]
    pts = (x[:, None, :] + offsets[None, :, :]).reshape(m * k, d)
    vals = fun(pts, np.repeat(idx, k)).reshape(m, k)

    grad = np.empty((m, d))
    hess = np.empty((m, d, d))
    for i in range(d):
        fp, fm = vals[:, 2 * i], vals[:, 2 * i + 1]
        grad[:, i] = (fp - fm) / (2 * h)
        hess[:, i, i] = (fp - 2 * f0 + fm) / h**2
    base = 2 * d
    for n, (i, j) in enumerate(pairs):
        fpp, fpm, fmp, fmm = (vals[:, base + 4 * n + q] for q in range(4))
        hij = (fpp - fpm - fmp + fmm) / (4 * h * h)
        hess[:, i, j] = hij
        hess[:, j, i] = hij
    return grad, hess


def newton_maximize(fun, x0, lower, upper, h=1e-4, max_iter=MAX_ITER, ftol=FTOL,
                    gtol=GTOL, max_step=2.0, derivatives=None):
    """Maximize ``fun(x, idx)`` independently for every row of ``x0``.

    Modified Newton: the negated Hessian is made positive definite by
    eigenvalue flooring, the step length is capped at ``max_step`` and then
    halved until the objective does not decrease.  Derivatives come from
    ``derivatives(x, idx) -> (grad, hess)`` when given, else from central
    differences with step ``h``.  Components sitting on a bound with the
    gradient pointing outward are held fixed (projected Newton).  A row
    converges when the relative objective change (actual, or predicted by the
    Newton decrement) falls below ``ftol`` or the free-gradient sup-norm
    below ``gtol``.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    margin = 0.0 if derivatives is not None else 2 * h
    lo_in = lower + margin
    hi_in = upper - margin
    x = np.clip(np.array(x0, dtype=float), lo_in, hi_in)
    size, d = x.shape
    all_idx = np.arange(size)
    f = fun(x, all_idx)
    converged = np.zeros(size, dtype=bool)
    iterations = np.zeros(size, dtype=int)
    active = np.isfinite(f)

    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xa, fa = x[idx], f[idx]
        if derivatives is not None:
            grad, hess = derivatives(xa, idx)
        else:
            grad, hess = _fd_derivatives(fun, xa, idx, fa, h)
        ok = np.all(np.isfinite(grad), axis=1) & np.all(np.isfinite(hess), axis=(1, 2))
        grad = np.where(ok[:, None], grad, 0.0)
        hess = np.where(ok[:, None, None], hess, -np.eye(d))
        pinned = ((xa <= lo_in) & (grad < 0)) | ((xa >= hi_in) & (grad > 0))
        grad = np.where(pinned, 0.0, grad)
        keep = ~pinned
        hess = np.where(keep[:, :, None] & keep[:, None, :], hess,
                        np.where(np.eye(d, dtype=bool), -1.0, 0.0))

        evals, evecs = np.linalg.eigh(-hess)
        floor = 1e-8 * np.maximum(1.0, np.max(np.abs(evals), axis=1, keepdims=True))
        evals = np.maximum(np.abs(evals), floor)
        proj = np.einsum("mji,mj->mi", evecs, grad)
        coef = proj / evals
        step = np.einsum("mij,mj->mi", evecs, coef)
        # predicted gain of a full Newton step (half the Newton decrement)
        predicted = 0.5 * np.sum(proj * coef, axis=1)
        small_grad = ok & ((np.max(np.abs(grad), axis=1) < gtol)
                           | (predicted < ftol * (1.0 + np.abs(fa))))
        norm = np.linalg.norm(step, axis=1)
        scale = np.where(norm > max_step, max_step / np.maximum(norm, 1e-300), 1.0)
        step *= scale[:, None]

        accepted = np.zeros(idx.size, dtype=bool)
        t_acc = np.zeros(idx.size)
        f_new = fa.copy()
        x_new = xa.copy()
        t = 1.0
        for _ in range(45):
            pending = np.flatnonzero(~accepted & ~small_grad & ok)
            if pending.size == 0:
                break
            trial = np.clip(xa[pending] + t * step[pending], lo_in, hi_in)
            ft = fun(trial, idx[pending])
            good = np.isfinite(ft) & (ft >= fa[pending])
            sel = pending[good]
            x_new[sel] = trial[good]
            f_new[sel] = ft[good]
            accepted[sel] = True
            t_acc[sel] = t
            t *= 0.5

        gain = f_new - fa
        flat = (gain <= ftol * (1.0 + np.abs(fa))) & (t_acc >= 0.25)
        done = small_grad | ~accepted | flat
        x[idx] = x_new
        f[idx] = f_new
        iterations[idx] = it
        converged[idx[done & ok]] = True
        active[idx[done | ~ok]] = False
    return BatchResult(x, f, converged, iterations)

"""Monte Carlo coverage experiments for the LR prediction methods and the plug-in baseline.

Datasets and predictands are drawn on counter-based streams, one row per
dataset, so a report is a pure function of its configuration.  For the LR
methods a predictand is covered exactly when its statistic does not exceed
the calibrated threshold (two-sided) or its signed statistic lies on the
right side of the signed threshold (one-sided); with a unimodal curve this
is the same event as the predictand falling inside the inverted interval,
so no root finding is needed per dataset.
"""

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import calibrate as cb
from . import lr, rng
from . import within_sample as ws
from .bounds import PredictionResult
from .discrete import BinomialSetup, PoissonSetup, _passing_run, discrete_prediction_set
from .errors import CalibrationError, ExperimentError, FitError, LrpiError
from . import families as fam
from .families import ParamVector, family_spec
from .jsonio import dumps

METHODS = ("lr-bootstrap", "lr-chisq", "lr-limit", "plug-in")
SIDES = ("two-sided", "upper", "lower")
MAX_DISCARD_FRACTION = 0.02

_DATA_STREAM = 10
_CALIB_STREAM = 11
_WITHIN_STREAM = 12


# ---------------------------------------------------------------------------
# plug-in baseline
# ---------------------------------------------------------------------------


def plug_in_interval(spec, data, level=0.95, side="two-sided", fitted=None):
    """Quantiles of the fitted distribution, ignoring estimation error."""
    fitted = fitted or fam.fit_ml(spec, data)
    alpha = 1.0 - level
    q = lambda u: fam.quantile(spec, fitted.params, u)
    impl = spec.impl
    if side == "two-sided":
        lo, hi = q(alpha / 2), q(1 - alpha / 2)
    elif side == "upper":
        lo, hi = impl.y_lo, q(level)
    elif side == "lower":
        lo, hi = q(alpha), impl.y_hi
    else:
        raise ValueError("side must be 'two-sided', 'upper' or 'lower'")
    return PredictionResult(lo, hi, level, "plug-in", {"params": dict(fitted.params)})


# ---------------------------------------------------------------------------
# configuration and report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoverageConfig:
    """One coverage experiment.

    ``kind`` is ``"continuous"`` (family/params over the ``n`` grid),
    ``"binomial"`` / ``"poisson"`` (exact enumeration over the ``grid`` of
    p or lambda values) or ``"within_sample"`` (Weibull Type-I censoring over
    the ``grid`` of expected failure counts).
    """

    kind: str = "continuous"
    family: str = "normal"
    params: dict = field(default_factory=dict)
    hyper: dict = field(default_factory=dict)
    n: tuple = (10,)
    m: int = 1
    grid: tuple = ()
    level: float = 0.95
    methods: tuple = ("lr-bootstrap",)
    sides: tuple = ("two-sided",)
    N: int = 1000
    B: int = 1000
    seed: int = 0
    corrected: tuple = (False,)
    limit_draws: int = 20000
    beta: float = 2.0
    eta: float = 1.0
    p_f1: float = 0.1
    d: float = 0.1
    variants: tuple = ("survival_adjusted",)

    def __post_init__(self):
        for name in ("n", "grid", "methods", "sides", "corrected", "variants"):
            v = getattr(self, name)
            if not isinstance(v, (tuple, list)):
                v = (v,)
            object.__setattr__(self, name, tuple(v))
        if self.kind not in ("continuous", "binomial", "poisson", "within_sample"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if self.kind in ("continuous", "within_sample") and self.N < 100:
            raise ValueError("N must be at least 100")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}")
        bad = [s for s in self.sides if s not in SIDES]
        if bad:
            raise ValueError(f"unknown sides {bad}")

    def to_dict(self):
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out


@dataclass(frozen=True)
class CoverageRow:
    method: str
    factors: dict
    side: str
    coverage: float
    se: float
    n_effective: int
    discards: int = 0


@dataclass(frozen=True)
class CoverageReport:
    config: CoverageConfig
    rows: tuple

    def find(self, method=None, side=None, **factors):
        out = []
        for r in self.rows:
            if method is not None and r.method != method:
                continue
            if side is not None and r.side != side:
                continue
            if any(r.factors.get(k) != v for k, v in factors.items()):
                continue
            out.append(r)
        return out

    def to_dict(self):
        return {"config": self.config.to_dict(), "rows": [asdict(r) for r in self.rows]}

    def to_json(self):
        return dumps(self.to_dict())

    def to_csv(self):
        keys = sorted({k for r in self.rows for k in r.factors})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", *keys, "side", "coverage", "se", "n_effective", "discards"])
        for r in self.rows:
            w.writerow([r.method, *[_fmt(r.factors.get(k)) for k in keys], r.side,
                        _fmt(r.coverage), _fmt(r.se), r.n_effective, r.discards])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return "" if v is None else str(v)


def _row(method, factors, side, hits, discards, exact=False):
    hits = np.asarray(hits, dtype=float)
    n_eff = int(hits.size)
    c = float(hits.mean()) if n_eff else float("nan")
    se = 0.0 if exact else math.sqrt(c * (1.0 - c) / n_eff)
    return CoverageRow(method, dict(factors), side, c, se, n_eff, int(discards))


# ---------------------------------------------------------------------------
# continuous families
# ---------------------------------------------------------------------------


def _draw(spec, params, n, N, key):
    U = rng.uniforms(key, 0, N, n + 1)
    p = {k: float(v) for k, v in params.items()}
    p.update(spec.hyper)
    draws = spec.impl.sample(p, U)
    return draws[:, :n], draws[:, n]


def _fit_rows(spec, X):
    fb = spec.impl.fit(X, 0, spec.hyper)
    ok = fb.converged & np.isfinite(fb.loglik)
    return fb.params, ok


def _row_params(spec, params, j):
    return ParamVector(spec.family_id, **{k: float(params[k][j]) for k in spec.impl.names})


def _signed(neg2, signs):
    return np.where(signs > 0, 1.0, -1.0) * neg2


def _covered(side, neg2, zeta, lam, z_lo, z_hi):
    if side == "two-sided":
        return neg2 <= lam
    if side == "upper":
        return zeta <= z_hi
    return zeta >= z_lo


def _continuous(config):
    spec = family_spec(config.family, **config.hyper)
    truth = ParamVector(spec.family_id, **config.params)
    alpha = 1.0 - config.level
    rows = []
    for ni, n in enumerate(config.n):
        n = int(n)
        X, Y = _draw(spec, truth, n, config.N, rng.stream_key(config.seed, _DATA_STREAM, ni))
        with np.errstate(all="ignore"):
            params, ok = _fit_rows(spec, X)
            neg2, good, pooled = lr.batch_neg2(spec, X, Y)
        ok &= good
        signs = np.zeros(config.N)
        if np.any(ok):
            sub = None if pooled is None else {k: np.asarray(v)[ok] for k, v in pooled.items()}
            signs[ok] = lr.batch_signs(spec, X[ok], Y[ok], sub)
        zeta = _signed(neg2, signs)
        factors = {"n": n}
        for method in config.methods:
            hits = {s: [] for s in config.sides}
            discards = int(np.count_nonzero(~ok))
            for j in np.flatnonzero(ok):
                try:
                    thr = _thresholds(spec, method, params, j, n, alpha, config, ni)
                except (CalibrationError, FitError):
                    discards += 1
                    continue
                for side in config.sides:
                    if method == "plug-in":
                        hits[side].append(_plug_in_hit(spec, params, j, Y[j], side, config.level))
                    else:
                        hits[side].append(bool(_covered(side, neg2[j], zeta[j], *thr)))
            if discards > MAX_DISCARD_FRACTION * config.N:
                raise ExperimentError("too many datasets failed", method=method, n=n,
                                      discards=discards, N=config.N)
            for side in config.sides:
                rows.append(_row(method, factors, side, hits[side], discards))
    return rows


def _thresholds(spec, method, params, j, n, alpha, config, ni):
    if method == "plug-in":
        return None
    if method == "lr-chisq":
        r = cb.chisq_calibrate(cb.CalibrationSpec(cb.Method.CHISQ, alpha))
    elif method == "lr-limit":
        r = cb.limit_calibrate(spec, _row_params(spec, params, j), alpha,
                               draws=config.limit_draws,
                               seed=rng.stream_key(config.seed, _CALIB_STREAM, ni, j) & (2**63 - 1))
    else:
        cal = cb.CalibrationSpec(cb.Method.BOOTSTRAP, alpha, B=config.B, seed=config.seed)
        r = cb.bootstrap_thresholds(spec, _row_params(spec, params, j), n, cal,
                                    labels=(_CALIB_STREAM, ni, int(j)))
    return r.lambda_hi, r.zeta_lo, r.zeta_hi


def _plug_in_hit(spec, params, j, y, side, level):
    p = {k: float(params[k][j]) for k in spec.impl.names}
    p.update(spec.hyper)
    alpha = 1.0 - level
    ppf = spec.impl.ppf
    if side == "two-sided":
        return bool(ppf(np.array(alpha / 2), p) <= y <= ppf(np.array(1 - alpha / 2), p))
    if side == "upper":
        return bool(y <= ppf(np.array(level), p))
    return bool(y >= ppf(np.array(alpha), p))


# ---------------------------------------------------------------------------
# discrete families: exact enumeration
# ---------------------------------------------------------------------------


def exact_binomial_coverage(n, m, p, level=0.95, corrected=False, side="two-sided"):
    """Exact coverage of the chi-square-calibrated set, summing over every ``x``."""
    px = stats.binom.pmf(np.arange(n + 1), n, p)
    set_level = level if side == "two-sided" else 2 * level - 1
    total = 0.0
    for x in range(n + 1):
        iv = discrete_prediction_set(BinomialSetup(x, n, m), set_level, corrected)
        lo, hi = _one_sided(iv, side, 0, m)
        total += px[x] * (stats.binom.cdf(hi, m, p) - stats.binom.cdf(lo - 1, m, p))
    return float(total)


def exact_poisson_coverage(n, m, lam, level=0.95, corrected=False, side="two-sided",
                           tail=1e-12):
    """Coverage summed over ``x`` until the remaining Poisson mass is below ``tail``."""
    mean_x = n * lam
    x_max = int(stats.poisson.isf(tail, mean_x)) + 1
    set_level = level if side == "two-sided" else 2 * level - 1
    total = 0.0
    for x in range(x_max + 1):
        px = stats.poisson.pmf(x, mean_x)
        iv = discrete_prediction_set(PoissonSetup(x, n, m), set_level, corrected)
        lo, hi = _one_sided(iv, side, 0, math.inf)
        upper = 1.0 if math.isinf(hi) else stats.poisson.cdf(hi, m * lam)
        total += px * (upper - stats.poisson.cdf(lo - 1, m * lam))
    return float(total)


def _one_sided(iv, side, floor, ceiling):
    if side == "upper":
        return floor, iv.hi
    if side == "lower":
        return iv.lo, ceiling
    return iv.lo, iv.hi


def _discrete(config):
    rows = []
    n = int(config.n[0])
    for value in config.grid:
        for corr in config.corrected:
            for side in config.sides:
                if config.kind == "binomial":
                    c = exact_binomial_coverage(n, config.m, value, config.level, corr, side)
                    factors = {"n": n, "m": config.m, "p": float(value), "corrected": corr}
                else:
                    c = exact_poisson_coverage(n, config.m, value, config.level, corr, side)
                    factors = {"n": n, "m": config.m, "lambda": float(value), "corrected": corr}
                method = "lr-chisq-corrected" if corr else "lr-chisq"
                rows.append(CoverageRow(method, factors, side, c, 0.0, 0, 0))
    return rows


# ---------------------------------------------------------------------------
# within-sample
# ---------------------------------------------------------------------------


def _within_datasets(config, n, t_c, gi):
    """Censored samples with at least one failure; returns samples and discard count."""
    samples = [None] * config.N
    pending = np.arange(config.N)
    discards = 0
    attempt = 0
    while pending.size:
        key = rng.stream_key(config.seed, _WITHIN_STREAM, gi, attempt)
        U = np.vstack([rng.uniforms(key, int(j), 1, n) for j in pending])
        T = config.eta * (-np.log1p(-U)) ** (1.0 / config.beta)
        keep = []
        for row, j in zip(T, pending):
            f = np.sort(row[row <= t_c])
            if f.size:
                samples[j] = ws.CensoredSample(f, n, t_c)
            else:
                keep.append(j)
                discards += 1
        pending = np.asarray(keep, dtype=int)
        attempt += 1
        if attempt > 1000:
            raise ExperimentError("could not draw samples with failures", n=n)
    return samples, discards


def _within(config):
    rows = []
    thr = cb.chisq_quantile(1, config.level)
    for gi, er in enumerate(config.grid):
        n, t_c, t_w = ws.design(config.beta, config.p_f1, er, config.d, config.eta)
        p_true = float(ws.conditional_probability(config.beta, config.eta, t_c, t_w))
        samples, discards = _within_datasets(config, n, t_c, gi)
        factors = {"expected_failures": float(er), "n": n, "beta": config.beta,
                   "p_f1": config.p_f1, "d": config.d}
        for method in config.methods:
            variants = config.variants if method == "lr-chisq" else (None,)
            for variant in variants:
                cover = []
                failed = 0
                if method == "lr-chisq":
                    ok_samples = [s for s in samples if variant == "survival_adjusted" or s.r >= 2]
                    failed = len(samples) - len(ok_samples)
                    try:
                        curves = ws.batch_curves(ok_samples, [t_w] * len(ok_samples), variant)
                    except FitError:
                        curves = []
                        for s in ok_samples:
                            try:
                                curves.append(ws.batch_curves([s], [t_w], variant)[0])
                            except FitError:
                                curves.append(None)
                    for s, vals in zip(ok_samples, curves):
                        if vals is None:
                            failed += 1
                            continue
                        iv = _passing_run(np.arange(s.at_risk + 1), vals, thr)
                        cover.append(_binom_mass(s.at_risk, p_true, iv.lo, iv.hi))
                    name = f"lr-chisq[{variant}]"
                elif method == "plug-in":
                    for s in samples:
                        try:
                            iv = ws.within_sample_plug_in(s, ws.WithinSampleQuery(t_w, config.level))
                        except LrpiError:
                            failed += 1
                            continue
                        cover.append(_binom_mass(s.at_risk, p_true, iv.lo, iv.hi))
                    name = "plug-in"
                else:
                    raise ValueError(f"method {method} not available for within-sample studies")
                if failed > MAX_DISCARD_FRACTION * config.N:
                    raise ExperimentError("too many datasets failed", method=name,
                                          failed=failed, N=config.N)
                row = _row(name, factors, "two-sided", cover, discards + failed)
                rows.append(row)
    return rows


def _binom_mass(m, p, lo, hi):
    return float(stats.binom.cdf(hi, m, p) - stats.binom.cdf(lo - 1, m, p))


def run_coverage(config):
    """Run the experiment described by ``config`` and return a CoverageReport."""
    if config.kind == "continuous":
        rows = _continuous(config)
    elif config.kind in ("binomial", "poisson"):
        rows = _discrete(config)
    else:
        rows = _within(config)
    return CoverageReport(config, tuple(rows))


__all__ = ["CoverageConfig", "CoverageReport", "CoverageRow", "plug_in_interval", "run_coverage",
           "exact_binomial_coverage", "exact_poisson_coverage"]

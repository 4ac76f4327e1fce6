"""Command-line front end: ``lrpi fit | predict | coverage | density``.

Every command writes one JSON document (to ``--out`` or stdout) with floats
at 17 significant digits.  Failures write an error document instead:
usage problems exit with status 2, numerical failures with status 1.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import bounds, families, lr, simstudy
from . import within_sample as ws
from .calibrate import Method
from .discrete import BinomialSetup, PoissonSetup, discrete_bound, discrete_prediction_set
from .errors import LrpiError
from .jsonio import dumps

DISCRETE = ("binomial", "poisson")
RANDOMIZED_METHODS = ("bootstrap", "limit")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# input
# ---------------------------------------------------------------------------


def read_numbers(path):
    """A JSON array of numbers, or a one-column CSV with an optional header."""
    with open(path, newline="") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("[") or stripped.startswith("{"):
        obj = json.loads(text)
        if isinstance(obj, dict):
            obj = obj.get("data", obj.get("failure_times"))
        return np.asarray(obj, dtype=float)
    values = []
    for i, row in enumerate(csv.reader(text.splitlines())):
        if not row or not row[0].strip():
            continue
        try:
            values.append(float(row[0]))
        except ValueError:
            if i == 0 and not values:
                continue  # header
            raise UsageError(f"non-numeric value {row[0]!r} in {path}") from None
    return np.asarray(values, dtype=float)


def read_censored(path, n=None, t_c=None):
    """Within-sample input: JSON envelope ``{"failure_times": [...], "n": .., "t_c": ..}``
    or a plain list of failure times with ``--n`` and ``--tc`` given on the command line."""
    with open(path) as fh:
        text = fh.read()
    obj = json.loads(text) if text.lstrip().startswith("{") else None
    if obj is not None:
        times = obj.get("failure_times", obj.get("data", []))
        n = obj.get("n", n)
        t_c = obj.get("t_c", t_c)
    else:
        times = read_numbers(path)
    if n is None or t_c is None:
        raise UsageError("within-sample prediction needs n and t_c (envelope fields or --n/--tc)")
    return ws.CensoredSample(times, int(n), float(t_c))


def _spec(args):
    hyper = {}
    if args.sigma is not None:
        hyper["sigma"] = args.sigma
    return families.family_spec(args.family, **hyper)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_fit(args):
    if args.tc is not None:
        sample = read_censored(args.data, args.n, args.tc)
        fit = families.fit_ml_type1_censored(sample.times(), sample.n, sample.t_c)
    else:
        fit = families.fit_ml(_spec(args), read_numbers(args.data))
    return fit.to_dict()


def cmd_density(args):
    with open(args.params) as fh:
        obj = json.load(fh)
    fam = obj["family"]
    spec = families.FamilySpec(fam["family"], fam.get("fixed_hyperparams", {}))
    params = families.ParamVector(spec.family_id, **obj["params"])
    xs = np.asarray(args.at, dtype=float)
    return {"x": xs, "log_density": np.atleast_1d(families.log_density(spec, params, xs))}


def _discrete_predict(args):
    if args.x is None or args.n is None:
        raise UsageError("--x and --n are required for discrete prediction")
    m = args.m if args.m is not None else args.n
    if args.family == "binomial":
        setup = BinomialSetup(int(args.x), int(args.n), int(m))
    else:
        setup = PoissonSetup(int(args.x), float(args.n), float(m))
    if args.side == "two-sided":
        iv = discrete_prediction_set(setup, args.level, args.corrected)
        return {"lower": iv.lo, "upper": iv.hi, "level": args.level, "side": args.side,
                "corrected": args.corrected, "diagnostics": iv.diagnostics}
    b = discrete_bound(setup, args.level, args.side, args.corrected)
    return {"bound": b, "level": args.level, "side": args.side, "corrected": args.corrected}


def _within_predict(args):
    if args.tw is None:
        raise UsageError("within-sample prediction requires --tw")
    sample = read_censored(args.data, args.n, args.tc)
    query = ws.WithinSampleQuery(args.tw, args.level, args.variant)
    if args.method == "plugin":
        iv = ws.within_sample_plug_in(sample, query)
    else:
        iv = ws.within_sample_interval(sample, query)
    out = {"lower": iv.lo, "upper": iv.hi, "level": args.level, "variant": query.variant.value,
           "method": "plugin" if args.method == "plugin" else "chisq",
           "diagnostics": iv.diagnostics}
    if args.curve_out and sample.at_risk > 0 and args.method != "plugin":
        vals = ws.within_sample_curve(sample, query)
        _write_csv(args.curve_out, ["y", "neg2_log_lr"],
                   zip(range(sample.at_risk + 1), vals))
    return out


def _continuous_predict(args):
    spec = _spec(args)
    data = read_numbers(args.data)
    if args.method == "plugin":
        return simstudy.plug_in_interval(spec, data, args.level, args.side).to_dict()
    ctx = lr.prepare(spec, data)
    res = bounds.predict(spec, data, level=args.level, side=args.side,
                         method=Method.parse(args.method), B=args.B, seed=args.seed or 0,
                         dof=args.dof, equal_tail=args.equal_tail, ctx=ctx)
    if args.curve_out:
        lo, hi = res.lower, res.upper
        if not np.isfinite(lo):
            lo = ctx.y0 - 3 * (hi - ctx.y0)
        if not np.isfinite(hi):
            hi = ctx.y0 + 3 * (ctx.y0 - lo)
        pad = 0.5 * (hi - lo)
        ys = np.linspace(max(lo - pad, ctx.support_lo), min(hi + pad, ctx.support_hi), 201)
        ys = ys[(ys > ctx.support_lo) & (ys < ctx.support_hi)] if np.isfinite(ctx.support_lo) else ys
        pts = lr.curve_points(ctx, ys)
        _write_csv(args.curve_out, ["y", "neg2_log_lr", "zeta"],
                   ((p.y, p.neg2_log_lr, p.signed) for p in pts))
    return res.to_dict()


def cmd_predict(args):
    if args.family in DISCRETE:
        return _discrete_predict(args)
    if args.tc is not None:
        return _within_predict(args)
    if args.data is None:
        raise UsageError("--data is required")
    if args.method in RANDOMIZED_METHODS and args.seed is None:
        raise UsageError(f"--seed is required with --method {args.method}")
    return _continuous_predict(args)


def cmd_coverage(args):
    with open(args.config) as fh:
        cfg = json.load(fh)
    cfg["seed"] = args.seed
    for key in ("N", "B"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    try:
        config = simstudy.CoverageConfig(**cfg)
    except TypeError as exc:
        raise UsageError(f"bad coverage config: {exc}") from None
    report = simstudy.run_coverage(config)
    if args.csv_out:
        with open(args.csv_out, "w") as fh:
            fh.write(report.to_csv())
    return report.to_dict()


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format(float(v), ".17g") for v in row])


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="lrpi", description="Likelihood-ratio prediction intervals")
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap (default: $LRPI_THREADS or 1)")
    p.add_argument("--out", help="write the JSON result here instead of stdout")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--family", default="normal")
        sp.add_argument("--data")
        sp.add_argument("--sigma", type=float, help="known sigma for normal_known_sigma")
        sp.add_argument("--n", type=float, help="discrete: data trials/exposure; within-sample: units")
        sp.add_argument("--tc", type=float, help="within-sample censoring time")

    f = sub.add_parser("fit", help="maximum likelihood fit")
    common(f)

    d = sub.add_parser("density", help="log density at points from a fit JSON")
    d.add_argument("--params", required=True)
    d.add_argument("--at", type=float, nargs="+", required=True)

    pr = sub.add_parser("predict", help="prediction interval or bound")
    common(pr)
    pr.add_argument("--level", type=float, default=0.95)
    pr.add_argument("--side", choices=("two-sided", "upper", "lower"), default="two-sided")
    pr.add_argument("--method", choices=("bootstrap", "chisq", "limit", "plugin"), default="bootstrap")
    pr.add_argument("--B", type=int, default=1000)
    pr.add_argument("--seed", type=int)
    pr.add_argument("--dof", type=int, default=1)
    pr.add_argument("--equal-tail", action="store_true")
    pr.add_argument("--curve-out", help="CSV of (y, -2 log Lambda, zeta) around the interval")
    pr.add_argument("--x", type=int, help="discrete: observed count")
    pr.add_argument("--m", type=float, help="discrete: future trials/exposure")
    pr.add_argument("--corrected", action="store_true")
    pr.add_argument("--tw", type=float, help="within-sample window end")
    pr.add_argument("--variant", default="survival_adjusted")

    c = sub.add_parser("coverage", help="Monte Carlo coverage study from a JSON config")
    c.add_argument("--config", required=True)
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--N", type=int)
    c.add_argument("--B", type=int)
    c.add_argument("--csv-out")
    return p


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "coverage": cmd_coverage,
            "density": cmd_density}


def _threads(args):
    value = args.threads
    if value is None:
        env = os.environ.get("LRPI_THREADS")
        value = int(env) if env else 1
    if value < 1:
        raise UsageError("--threads must be positive")
    return value


def _emit(doc, path):
    text = dumps(doc) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None):
    out = None
    try:
        args = build_parser().parse_args(argv)
        out = args.out
        _threads(args)
        doc = COMMANDS[args.command](args)
    except UsageError as exc:
        _emit({"error": "UsageError", "message": str(exc), "diagnostics": {}}, out)
        return 2
    except LrpiError as exc:
        # domain/support/data errors are bad input; fit/calibration failures are numerical
        _emit(exc.to_dict(), out)
        return 2 if isinstance(exc, ValueError) else 1
    except (ValueError, TypeError, KeyError, OSError) as exc:
        _emit({"error": type(exc).__name__, "message": str(exc), "diagnostics": {}}, out)
        return 2
    _emit(doc, out)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

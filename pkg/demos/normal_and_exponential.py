"""Exact LR prediction intervals in the pivotal families.

For normal data the LR interval calibrated by the bootstrap reproduces the
Student-t interval, and for exponential data the one-sided bounds come from
an F quantile.  Both are printed next to the package output.
"""

import numpy as np
from scipy import stats

from lrpi import bounds, families, lr

rng = np.random.default_rng(1)

x = rng.normal(10.0, 2.0, size=12)
spec = families.family_spec("normal")
res = bounds.predict(spec, x, level=0.95, method="bootstrap", B=4000, seed=3)
n, s = x.size, x.std(ddof=1)
half = stats.t.ppf(0.975, n - 1) * s * np.sqrt(1 + 1 / n)
print("normal data, n =", n)
print(f"  LR bootstrap  [{res.lower:.3f}, {res.upper:.3f}]")
print(f"  Student t     [{x.mean() - half:.3f}, {x.mean() + half:.3f}]")

# the curve itself; zeta is the signed statistic
ctx = lr.prepare(spec, x)
for p in lr.curve_points(ctx, np.linspace(res.lower, res.upper, 5)):
    print(f"  y={p.y:8.3f}  -2logL={p.neg2_log_lr:7.4f}  zeta={p.signed:+8.4f}")

t = rng.exponential(5.0, size=8)
spec = families.family_spec("exponential")
# tail quantiles of Y / xbar are noisy, hence the larger B
up = bounds.predict(spec, t, level=0.9, side="upper", method="bootstrap", B=40000, seed=5)
# Y / xbar ~ F(2, 2n)
exact = t.mean() * stats.f.ppf(0.9, 2, 2 * t.size)
print("\nexponential data, n =", t.size)
print(f"  90% upper bound: LR bootstrap {up.upper:.3f}, exact {exact:.3f}")

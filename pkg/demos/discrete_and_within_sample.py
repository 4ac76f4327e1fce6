"""Integer prediction sets: binomial, Poisson and within-sample failure counts."""

from lrpi.discrete import BinomialSetup, PoissonSetup, discrete_prediction_set
from lrpi.simstudy import exact_binomial_coverage
from lrpi.within_sample import (CensoredSample, WithinSampleQuery, within_sample_interval,
                                within_sample_plug_in)

# 3 defectives in 40 inspected; how many in the next 25?
setup = BinomialSetup(3, 40, 25)
for corrected in (False, True):
    s = discrete_prediction_set(setup, 0.95, corrected)
    print(f"binomial set (corrected={corrected}): {s.lo}..{s.hi}")

print("exact coverage at n=m=15 over p:")
for p in (0.05, 0.1, 0.3, 0.5):
    raw = exact_binomial_coverage(15, 15, p)
    cor = exact_binomial_coverage(15, 15, p, corrected=True)
    print(f"  p={p:4.2f}  LR {raw:.4f}  corrected {cor:.4f}")

s = discrete_prediction_set(PoissonSetup(7, 2.0, 1.0), 0.95, corrected=True)
print(f"poisson: 7 events in 2 years, next year: {s.lo}..{s.hi}")

# 50 units on test until t_c = 1; four failed.  Failures among survivors by t = 2?
sample = CensoredSample([0.31, 0.55, 0.72, 0.94], 50, 1.0)
q = WithinSampleQuery(2.0)
lr_iv = within_sample_interval(sample, q)
pl_iv = within_sample_plug_in(sample, q)
print(f"within-sample: LR {lr_iv.lo}..{lr_iv.hi}, plug-in {pl_iv.lo}..{pl_iv.hi}")

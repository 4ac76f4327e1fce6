"""Likelihood-ratio prediction intervals.

A future observation ``y`` is compared with the data through the likelihood
ratio of a model in which ``y`` shares all parameters with the data against
one in which a single parameter may differ.  The set of ``y`` whose
``-2 log`` ratio stays below a calibrated threshold is the prediction
interval.  Thresholds come from a parametric bootstrap, the chi-square
approximation or a plug-in limit law.
"""

from .bounds import (PredictionResult, equal_tail_interval, one_sided_bound, predict,
                     two_sided_interval)
from .calibrate import (CalibrationResult, CalibrationSpec, Method, bootstrap_calibrate,
                        chisq_calibrate, chisq_quantile, limit_calibrate)
from .discrete import (BinomialSetup, IntegerInterval, PoissonSetup, binomial_neg2_log_lr,
                       discrete_bound, discrete_prediction_set, poisson_neg2_log_lr)
from .errors import (CalibrationError, DegenerateDataError, DesignError, ExperimentError,
                     FitError, LrpiError, NoFailuresError, ParameterDomainError, SupportError,
                     UnboundedSideError)
from .families import (FamilyId, FamilySpec, FittedModel, ParamVector, cdf, family_spec,
                       fit_full_model, fit_ml, fit_ml_type1_censored, log_density, quantile,
                       sample)
from .lr import LrContext, curve_points, mode_y0, neg2_log_lr, prepare, signed_lr
from .simstudy import CoverageConfig, CoverageReport, plug_in_interval, run_coverage
from .within_sample import (CensoredSample, Variant, WithinSampleQuery,
                            within_sample_interval, within_sample_neg2_log_lr,
                            within_sample_plug_in)

__version__ = "0.1.0"

"""Exception hierarchy for lrpi."""


class LrpiError(Exception):
    """Base class for all errors raised by this package."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def to_dict(self):
        return {
            "error": type(self).__name__,
            "message": str(self),
            "diagnostics": {k: _plain(v) for k, v in self.diagnostics.items()},
        }


def _plain(value):
    try:
        import numpy as np

        if isinstance(value, np.generic):
            return value.item()
        if isinstance(value, np.ndarray):
            return value.tolist()
    except ImportError:  # pragma: no cover
        pass
    return value


class ParameterDomainError(LrpiError, ValueError):
    """Parameter values violate the family's constraints."""


class SupportError(LrpiError, ValueError):
    """A data value or predictand lies outside the family support."""


class DegenerateDataError(LrpiError, ValueError):
    """Data carry no information about a scale/shape (e.g. all values equal)."""


class FitError(LrpiError, RuntimeError):
    """Maximum likelihood iteration failed to converge."""


class NoFailuresError(LrpiError, ValueError):
    """A Type-I censored sample with zero failures; the Weibull fit is unidentifiable."""


class DesignError(LrpiError, ValueError):
    """Regression design has no spread in the covariate."""


class CalibrationError(LrpiError, RuntimeError):
    """Too many bootstrap replicates failed, or the calibration request is unsupported."""


class UnboundedSideError(LrpiError, RuntimeError):
    """The LR curve never reaches the threshold on one side of the mode."""


class ExperimentError(LrpiError, RuntimeError):
    """Too many datasets in a coverage experiment failed."""

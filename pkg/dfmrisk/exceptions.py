"""
dfmrisk.exceptions
~~~~~~~~~~~~~~~~~~

This module provides the error catalog of the package. Every error carries the
module it was raised from and the process exit code the CLI reports for it.

Families:
---------
- ConfigError (exit 2): the run configuration or the model shape is invalid.
- DataError (exit 3): the panel, a scenario or an argument violates a contract.
- NumericalError (exit 4): the numerics failed (singular matrices, divergence).
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class DfmError(Exception):
    """Base class of all package errors.

    :attrs module (str): short name of the module that raised the error.
    :attrs exit_code (int): process exit status for the CLI.
    """

    exit_code = EXIT_NUMERICAL
    module = "dfmrisk"

    def __init__(self, message="", module=None):
        super().__init__(message)
        if module is not None:
            self.module = module


class ConfigError(DfmError):
    exit_code = EXIT_CONFIG
    module = "config"


class DataError(DfmError):
    exit_code = EXIT_DATA


class NumericalError(DfmError):
    exit_code = EXIT_NUMERICAL


# ---- config ----

class InvalidSpec(ConfigError):
    module = "model_spec"


class InvalidOption(ConfigError):
    pass


class UnknownStage(ConfigError):
    module = "pipeline"


# ---- data ----

class ZeroVarianceSeries(DataError):
    module = "timeseries"

    def __init__(self, name):
        super().__init__("series {!r} is constant".format(name))
        self.name = name


class InsufficientData(DataError):
    module = "timeseries"

    def __init__(self, name, n_obs=0):
        super().__init__(
            "series {!r} has {} non-missing values, need at least 2".format(name, n_obs))
        self.name = name


class DimensionMismatch(DataError):
    module = "timeseries"


class FrequencyMismatch(DataError):
    module = "timeseries"


class DuplicateSeriesName(DataError):
    module = "timeseries"


class ParseError(DataError):
    module = "io"

    def __init__(self, line, column, message=""):
        super().__init__("line {}, column {}: {}".format(line, column, message))
        self.line = line
        self.column = column


class NonMonotonicPeriods(DataError):
    module = "io"


class UnknownSeries(DataError):
    module = "io"


class NotStandardized(DataError):
    module = "estimation"


class NonPositiveStdError(DataError):
    module = "estimation"


class WrongShape(DataError):
    module = "estimation"


class EmptySeries(DataError):
    module = "risk"


class InvalidP(DataError):
    module = "risk"


class WindowTooLong(DataError):
    module = "risk"


class InvalidWindow(DataError):
    module = "risk"


class OverrideInSample(DataError):
    module = "forecast"


class OverrideBeyondHorizon(DataError):
    module = "forecast"


class InvalidHorizon(DataError):
    module = "forecast"


# ---- numerical ----

class NonFiniteValue(NumericalError):
    module = "model_spec"


class SingularInnovationCovariance(NumericalError):
    module = "kalman"


class DegenerateCovariance(NumericalError):
    module = "estimation"


class OptimizerDiverged(NumericalError):
    module = "estimation"


class HessianNotPD(NumericalError):
    module = "estimation"


class AllSeriesDropped(NumericalError):
    module = "estimation"


class NotConverged(NumericalError):
    module = "forecast"


class HessianNotPDWarning(UserWarning):
    """Fit returned a partial report: the negative Hessian is not positive definite."""


def describe(exc):
    """
    Render an error with its provenance, e.g. ``[kalman] SingularInnovationCovariance: ...``.

    :param exc (Exception): the error to describe.
    :rtype str: one-line description.
    """
    module = getattr(exc, "module", "dfmrisk")
    return "[{}] {}: {}".format(module, type(exc).__name__, exc)


def exit_code_for(exc):
    """Exit status for ``exc``; non-package errors count as numerical failures."""
    return getattr(exc, "exit_code", EXIT_NUMERICAL)

# -*- coding: utf-8 -*-

"""
All application defined segmentation errors.

Every error carries the process exit code the command line surface uses
when the error escapes a command.
"""


class SegError(Exception):
    """
    Base class for all tumorseg errors.
    """
    exit_code: int = 1


class UsageError(SegError):
    """
    Raised when a command is invoked with inconsistent arguments.
    """
    exit_code = 2


class VolumeFormatError(SegError):
    """
    Raised when a volume file cannot be read or written.
    `code` names the failure: bad-magic, bad-version, bad-dtype,
    bad-dims, payload-short or io.
    """
    exit_code = 3

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class CaseIOError(SegError):
    """
    Raised when a case directory or another artifact can't be read or written.
    """
    exit_code = 3


class ConfigError(SegError):
    """
    Raised when a configuration document fails validation.
    """
    exit_code = 4


class ShapeError(SegError, ValueError):
    """
    Raised when tensor shapes are inconsistent with an operation.
    """
    exit_code = 4


class LabelError(SegError, ValueError):
    """
    Raised when a label volume holds values outside {0, 1, 2, 4}.
    """
    exit_code = 4


class SplitError(SegError):
    """
    Raised when cases can't be split into folds.
    """
    exit_code = 4


class NumericError(SegError):
    """
    Raised when training produces a non-finite loss.
    """
    exit_code = 5


class DegenerateError(SegError, ValueError):
    """
    Raised when a statistic is undefined because of zero variance.
    """
    exit_code = 5


class UndefinedMetricError(SegError, ValueError):
    """
    Raised when a metric is undefined for its inputs (empty mask,
    zero denominator).
    """
    exit_code = 5


class MissingCacheError(SegError, RuntimeError):
    """
    Raised when a backward pass is requested without its forward cache.
    """
    exit_code = 5

class CoxCVError(Exception):
    """Base class for errors raised by coxcv."""


class DatasetError(CoxCVError, ValueError):
    """Invalid survival data, optionally located at a row/column of a file."""

    def __init__(self, message, *, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ConvergenceError(CoxCVError, RuntimeError):
    pass


class UndefinedCVError(CoxCVError):
    """A cross-validation error curve has no defined entry to select from.

    Raised for basic cross-validation when some test fold has no events or
    fewer than two subjects (leave-one-out included).
    """

    def __init__(self, message, *, fold_event_counts=None, fold_sizes=None):
        super().__init__(message)
        self.fold_event_counts = None if fold_event_counts is None else [int(c) for c in fold_event_counts]
        self.fold_sizes = None if fold_sizes is None else [int(c) for c in fold_sizes]

"""Exception types shared across the toolkit.

The CLI maps these onto its exit codes: UsageError -> 1, DataError -> 2.
"""

from __future__ import annotations


class GreenmarkError(Exception):
    """Base class for all toolkit errors."""


class UsageError(GreenmarkError, ValueError):
    """Caller violated a precondition (bad parameter, wrong shape, bad flag)."""


class DataError(GreenmarkError, ValueError):
    """Input data is malformed (bad record, bad file, version mismatch)."""


class UndefinedStatisticError(GreenmarkError, ArithmeticError):
    """A detector statistic is undefined for this input (e.g. nothing scored)."""

"""Exception types shared across the package.

Each class carries the process exit code the CLI maps it to:
1 usage/validation, 2 infeasible budget, 3 unsupported topology, 4 I/O.
"""

from __future__ import annotations


class AfiePruneError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ValidationError(AfiePruneError):
    """A value or structure violates a documented invariant."""


class FormatError(AfiePruneError):
    """A byte stream is not a well-formed tensor archive."""


class TruncatedArchiveError(FormatError):
    """Archive payload ends before its declared length."""

    def __init__(self, message: str, missing_bytes: int):
        super().__init__(message)
        self.missing_bytes = missing_bytes


class InfeasibleBudgetError(AfiePruneError):
    """The requested global pruning ratio cannot be met even with every
    layer at the clamp ceiling."""

    exit_code = 2

    def __init__(self, message: str, max_achievable: float):
        super().__init__(message)
        self.max_achievable = max_achievable


class UnsupportedTopologyError(AfiePruneError):
    """Weight surgery was requested on an archive without a chain topology."""

    exit_code = 3

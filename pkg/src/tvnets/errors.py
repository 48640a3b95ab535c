"""Exception hierarchy shared across the estimation stages.

Exit-code mapping used by the CLI: ValidationError -> 1, NumericError -> 2,
IOError-like failures -> 3.
"""


class TvnetsError(Exception):
    """Base class for all package errors."""


class ValidationError(TvnetsError):
    """Bad user input: malformed config, out-of-range parameter."""


class DataFormatError(TvnetsError):
    """Malformed input file (ragged rows, non-numeric cells)."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class MissingDataError(TvnetsError):
    """NaN or missing entries in an input table."""


class InsufficientDataError(ValidationError):
    """Not enough observations for the requested lag order."""


class NumericError(TvnetsError):
    """Numerical failure in an estimation stage."""


class DegenerateWindowError(NumericError):
    """Fewer than two observations fall inside a kernel window."""


class SingularDesignError(NumericError):
    """Local least-squares system is rank deficient."""


class ConvergenceError(NumericError):
    """Iterative solver exhausted its iteration budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InfeasibleError(NumericError):
    """Constrained problem has no feasible point."""


class SelectionError(NumericError):
    """Every candidate in a tuning grid failed."""

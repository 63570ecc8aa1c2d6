"""Exception hierarchy.

Data problems (bad files, invariant violations) and numerical failures are kept
apart so callers, the CLI in particular, can map them to distinct exit codes.
"""


class ScalexError(Exception):
    """Base class for all errors raised by this package."""


class DataError(ScalexError, ValueError):
    """Input data failed to parse or violates a domain invariant."""


class ValidationError(DataError):
    """A record violates a domain invariant.

    ``location`` identifies the offending run, row or field.
    """

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class OutOfDomainError(DataError):
    """A query falls outside the region where an interpolant is defined."""


class NumericalError(ScalexError, ArithmeticError):
    """A fit or computation failed numerically (degenerate design, no minimum...)."""

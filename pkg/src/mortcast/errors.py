"""Exception types shared across the package."""


class MortcastError(Exception):
    """Base class for all package-specific errors."""


class DomainError(MortcastError, ValueError):
    """A numeric input lies outside the mathematical domain of an operation.

    Raised for things like negative death rates, probabilities at or past
    their boundaries, or non-monotone survival curves. When the offending
    value sits in a surface, the message names the (age, year) cell.
    """


class ParseError(MortcastError, ValueError):
    """Malformed input text. The message carries the 1-based line number."""


class FitError(MortcastError, RuntimeError):
    """A fit reached a degenerate state it cannot recover from on its own.

    The message says what to change (typically: re-initialize with a
    different starting vector).
    """

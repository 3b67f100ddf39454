"""Exception types shared across the package."""


class KrmapError(Exception):
    """Base class for library errors."""


class DomainError(KrmapError, ValueError):
    """A point lies outside the analytic support of a basis family."""


class ArgumentError(KrmapError, ValueError):
    """Invalid argument (length mismatch, out-of-range index, ...)."""


class InvalidDensityError(KrmapError):
    """A density object violates its contract (e.g. non-positive normalizer)."""


class NumericalError(KrmapError):
    """A numerical procedure failed to converge or produced unusable values."""


class DegenerateEnsembleError(NumericalError):
    """All importance weights underflowed to zero even after shifting."""


class ContractError(KrmapError):
    """A structural precondition was violated (e.g. non-downward-closed set)."""


class BudgetExhaustedError(KrmapError):
    """An accuracy budget was exhausted before reaching the target tolerance."""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics

"""Exception hierarchy shared by every module of the package."""


class KoopmanObserverError(Exception):
    """Base class for all package errors."""


class DataError(KoopmanObserverError, ValueError):
    """Malformed, empty, non-finite or dimensionally inconsistent data."""


class LiftingError(DataError):
    """An observable produced a non-finite value.

    Attributes
    ----------
    index : int
        Position of the offending observable in the dictionary.
    """

    def __init__(self, index, label=None):
        self.index = index
        self.label = label
        name = f" ({label})" if label else ""
        super().__init__(f"observable {index}{name} evaluated to a non-finite value")


class DegenerateInputError(DataError):
    """Input carries no usable information (e.g. all-zero lifted columns)."""


class IllConditionedError(KoopmanObserverError):
    """A Gram matrix is numerically singular."""

    def __init__(self, message, min_eigenvalue):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(message)


class UnboundedRequirementError(KoopmanObserverError, ValueError):
    """The sample-size requirement is infinite (zero error-bound constant)."""


class SolverError(KoopmanObserverError):
    """The SDP solver broke down or did not converge.

    Distinct from certified infeasibility, which is reported as a result.
    """


class ParameterError(KoopmanObserverError, ValueError):
    """Invalid model or system parameters."""

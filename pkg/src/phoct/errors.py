"""Exception types raised across the package."""


class PHError(Exception):
    """Base class for all package errors."""


class StructureError(PHError, ValueError):
    """Matrix dimensions are inconsistent with each other."""


class PreconditionError(PHError, ValueError):
    """An operation was called on inputs outside its domain."""


class ConstraintError(PHError, ValueError):
    """A control violates the input box."""


class DecompositionError(PHError, RuntimeError):
    """The subspace decomposition failed one of its post-conditions.

    Attributes
    ----------
    residuals : dict
        Residual name -> value for every checked invariant.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = dict(residuals or {})


class NumericError(PHError, RuntimeError):
    """A numerical kernel (eigensolver, factorization) failed."""

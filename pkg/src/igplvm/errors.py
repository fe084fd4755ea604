"""Exception types shared across the package."""
import numpy as np


class DomainError(ValueError):
    """Input outside an operation's domain (non-finite, wrong shape, ...)."""


class KernelError(np.linalg.LinAlgError):
    """A kernel or covariance matrix could not be factorized."""


class NonLingamError(ValueError):
    """No row permutation of the unmixing matrix has a nonzero diagonal."""

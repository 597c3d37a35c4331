"""Exception and warning types raised across the package."""


class DimensionError(ValueError):
    """A matrix or vector does not have the shape its role requires."""


class SpecError(ValueError):
    """A safety specification violates one of its structural invariants."""


class InfeasibleError(RuntimeError):
    """No certificate exists for the requested closed loop.

    Carries the best drift-operator spectral radius seen, when known.
    """

    def __init__(self, message, best_radius=None, stage=None):
        super().__init__(message)
        self.best_radius = best_radius
        self.stage = stage


class CertificateError(RuntimeError):
    """A candidate certificate fails one or more barrier conditions.

    ``failures`` maps condition names to their (negative) margins.
    """

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = dict(failures or {})


class UncertifiedLevelWarning(UserWarning):
    """A level set was estimated heuristically rather than computed exactly."""


class ConditioningWarning(UserWarning):
    """A linear solve was performed on a badly conditioned system."""

"""Exception and warning types raised across the package."""


class RomOptError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RomOptError, ValueError):
    """Inconsistent model definition or run configuration."""


class SingularSystemError(RomOptError, ArithmeticError):
    """A linear system is singular to working precision.

    Attributes
    ----------
    condition : float
        Estimated 1-norm condition number (``inf`` when a pivot vanished).
    """

    def __init__(self, message, condition=float("inf")):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class RankError(RomOptError, ValueError):
    """Requested basis size exceeds the numerical rank of the snapshots."""


class ManifoldDomainError(RomOptError, ValueError):
    """Point lies outside the domain where the logarithm map is defined."""


class ManifoldMembershipError(RomOptError, ValueError):
    """Matrix fails the membership test of its manifold."""


class InterpolationConditioningError(RomOptError, ArithmeticError):
    """Kernel matrix of an RBF fit is too ill-conditioned."""


class DatabaseFormatError(RomOptError, IOError):
    """Database file is corrupted, truncated or has an unsupported version."""


class EvaluationError(RomOptError, RuntimeError):
    """Objective or constraint evaluation failed at a trial point."""


class NonConvergenceError(RomOptError, RuntimeError):
    """An iterative procedure exhausted its iteration budget."""


class PoleError(RomOptError, ArithmeticError):
    """The shifted fluid operator ``lambda*I - N_ff`` is singular."""


class SensitivityUnavailableError(RomOptError, ArithmeticError):
    """Eigenvalue derivative undefined (defective or near-defective eigenvalue)."""


class IllConditionedWarning(UserWarning):
    """Matrix condition number exceeds the warning threshold."""


class AlignmentWarning(UserWarning):
    """Procrustes cross-Gram matrix is nearly rank deficient."""


class ExtrapolationWarning(UserWarning):
    """Query point lies outside the sampled parameter box."""

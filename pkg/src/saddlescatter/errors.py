"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class SaddleScatterError(Exception):
    """Base class."""


class ConfigError(SaddleScatterError):
    """Malformed model or run configuration (schema error)."""


class ModelEvaluationError(SaddleScatterError):
    """Potential returned non-finite values."""


class AssumptionViolation(SaddleScatterError):
    """Barrier hypotheses fail (e.g. Hessian at the origin not negative definite)."""


class IntegrationFailure(SaddleScatterError):
    """Step size underflow or step budget exhausted.

    The last accepted state is kept in :attr:`last_state`.
    """

    def __init__(self, message: str, last_state=None, last_time=None):
        super().__init__(message)
        self.last_state = last_state
        self.last_time = last_time


class PrecisionError(SaddleScatterError):
    """A requested tolerance could not be met."""


class NoAsymptoteError(SaddleScatterError):
    """Trajectory does not reach the asymptotic fitting region."""


class CapturedError(SaddleScatterError):
    """Trajectory converges to the fixed point instead of escaping."""


class NonRegularDirectionError(SaddleScatterError):
    """The scattering map is singular (sigma_hat below the floor)."""


class NotFoundError(SaddleScatterError):
    """No root found where one was required."""


class ConfigurationError(SaddleScatterError):
    """Incompatible inputs (for example a direction pair that is not in the relation)."""


class ResolutionError(SaddleScatterError):
    """Quantum grid too coarse for the requested h."""


class IndeterminateRankError(SaddleScatterError):
    """Singular values fall inside the rank-ambiguity band."""


class ProjectionError(SaddleScatterError):
    """Projection of a Lagrangian manifold to configuration space is singular (caustic)."""


class TruncationError(SaddleScatterError):
    """Partial-wave sum not converged within the channel budget."""

"""Exception hierarchy for ltvsteer."""


class SteeringError(Exception):
    """Base class for all ltvsteer errors."""


class NotSymmetric(SteeringError, ValueError):
    pass


class IndefiniteBeyondTolerance(SteeringError, ValueError):
    pass


class NotPositiveDefinite(SteeringError, ValueError):
    pass


class NotPositiveDeterminant(SteeringError, ValueError):
    pass


class IntegrationFailure(SteeringError, RuntimeError):
    pass


class RelationViolation(SteeringError, RuntimeError):
    """A Gramian identity that must hold by construction was violated."""


class PartitionNotFound(SteeringError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ExistenceNotCertified(SteeringError):
    pass


class FactorizationFailed(SteeringError):
    def __init__(self, message, best_residual=float("nan")):
        super().__init__(message)
        self.best_residual = best_residual


class SingularInterleaver(SteeringError, ValueError):
    pass


class InfeasibleTarget(SteeringError):
    """The requested terminal matrix is not reachable."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate or {}


class NoCertificateApplies(SteeringError):
    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate or {}


class AssumptionViolated(SteeringError):
    pass


class RdeEscape(SteeringError):
    def __init__(self, message, escape_time=None):
        super().__init__(message)
        self.escape_time = escape_time


class NotControllable(SteeringError):
    pass


class ScheduleGap(SteeringError, ValueError):
    pass


class ScenarioError(SteeringError, ValueError):
    """Malformed scenario document; the message names the offending field."""

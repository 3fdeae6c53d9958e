"""Exception hierarchy shared across the package."""


class ETDFError(Exception):
    """Base class for all errors raised by etdf."""


class IntegrationError(ETDFError):
    """Stiffness/discontinuity failure of the ODE integrator."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class InconsistentMonodromy(ETDFError):
    pass


class AssignmentImpossible(ETDFError):
    """The pair (A, b) is not controllable."""


class DeterminantObstruction(ETDFError):
    """Target spectrum is incompatible with det(A exp(b K^T)) > 0."""


class IllConditionedAssignment(ETDFError):
    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class SectionProjectionFailed(ETDFError):
    pass


class PoleProximity(ETDFError):
    pass


class DegenerateTrivialMultiplier(ETDFError):
    pass


class DegenerateNormalization(ETDFError):
    pass


class NoPeriodicOrbit(ETDFError):
    pass


class OrbitNotFound(ETDFError):
    pass


class ConfigError(ETDFError):
    pass

"""Exception types shared across the package."""


class SimulationError(Exception):
    """Base class for all errors raised by this package."""


class MechanismError(SimulationError):
    """Invalid mechanism description: bad parameters, inconsistent assembly,
    disconnected or malformed constraint graph."""


class AngularRateError(SimulationError):
    """Angular rate too large for the time step (||w|| >= 2/h)."""


class SingularBlockError(SimulationError):
    """A diagonal block became singular during factorization, indicating a
    kinematic singularity or redundant constraints."""


class DanglingConstraintError(SingularBlockError):
    """A constraint node was eliminated before receiving any coupling update;
    the mechanism is ill-posed (constraint not attached to an eliminated body)."""


class NewtonError(SimulationError):
    """Base class for failures of the implicit step solver."""


class LineSearchError(NewtonError):
    """Backtracking line search could not reduce the residual."""


class NonConvergenceError(NewtonError):
    """Newton iteration did not converge within the iteration budget."""

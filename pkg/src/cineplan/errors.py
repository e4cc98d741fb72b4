"""Exception hierarchy shared across the pipeline stages."""


class CineplanError(Exception):
    """Base class for all pipeline errors."""


class InvalidArgumentError(CineplanError, ValueError):
    """A caller-supplied value violates a precondition."""


class OutOfBoundsError(CineplanError):
    """A pose or point lies outside the scene / grid bounds."""


class ParseError(CineplanError):
    """An input file violates its schema."""


class InvalidDataError(CineplanError):
    """Structurally valid input with inconsistent content (e.g. mixed dims)."""


class ChooserError(CineplanError):
    """The select-and-sort chooser failed; carries the description index."""

    def __init__(self, message: str, description_index: int | None = None):
        super().__init__(message)
        self.description_index = description_index


class OracleError(CineplanError):
    """A preference oracle failed (timeout, malformed verdict, closed session)."""


class NumericalError(CineplanError):
    """A matrix factorization failed."""


class ConvergenceError(CineplanError):
    """Newton iteration did not reach the gradient tolerance."""

    def __init__(self, message: str, grad_norm: float):
        super().__init__(message)
        self.grad_norm = grad_norm


class InfeasibleRegionError(CineplanError):
    """Candidate sampling could not find enough free-space poses."""


class UnreachableError(CineplanError):
    """No collision-free path exists between two waypoints."""


class InvalidEndpointError(CineplanError):
    """A path endpoint maps to an occupied or out-of-clearance voxel."""


class CorridorInfeasibleError(CineplanError):
    """Even the minimal corridor box violates the safety margin."""


class TrajectoryInfeasibleError(CineplanError):
    """Trajectory verification still fails after the refit budget."""

    def __init__(self, message: str, sample=None):
        super().__init__(message)
        self.sample = sample

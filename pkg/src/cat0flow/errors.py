"""Exception hierarchy shared by every module of the package."""


class Cat0FlowError(Exception):
    """Base class for all errors raised by cat0flow."""


class PointMismatchError(Cat0FlowError, TypeError):
    """A point was used with a target space it does not belong to."""


class InvalidParameterError(Cat0FlowError, ValueError):
    """An argument is outside its admissible range."""


class DomainMismatchError(Cat0FlowError, ValueError):
    """Two maps or fields do not live on the same domain or target."""


class PreconditionError(Cat0FlowError, ValueError):
    """A check was requested on data that violates its precondition."""


class BarycenterConvergenceError(Cat0FlowError, RuntimeError):
    """Iterative barycenter solver hit its iteration cap.

    Attributes
    ----------
    last_iterate : numpy.ndarray
        Raw coordinates of the last iterate.
    residual : float
        Size of the last update step.
    """

    def __init__(self, message, last_iterate=None, residual=float("nan")):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class SweepLimitError(Cat0FlowError, RuntimeError):
    """Resolvent sweeps did not reach the displacement tolerance.

    Attributes
    ----------
    last_iterate : MapState
        The map after the final sweep.
    displacement : float
        Max vertex displacement of the final sweep.
    step_index : int or None
        Index of the implicit step in a Crandall-Liggett chain, if any.
    """

    def __init__(self, message, last_iterate=None, displacement=float("nan"), step_index=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.displacement = displacement
        self.step_index = step_index


class SingularSolveError(Cat0FlowError, RuntimeError):
    """A linear solve in the heat semigroup failed."""


class ConfigError(Cat0FlowError, ValueError):
    """Scenario configuration is invalid.

    Attributes
    ----------
    errors : list of str
        Every validation problem found, each prefixed with its field path.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))

"""Exception hierarchy shared by all modules."""


class CCPlapError(Exception):
    pass


class InvalidMeshError(CCPlapError, ValueError):
    pass


class IncompatibleFieldsError(CCPlapError, ValueError):
    pass


class InvalidWeightError(CCPlapError, ValueError):
    pass


class InvalidSpecError(CCPlapError, ValueError):
    pass


class DomainError(CCPlapError, ValueError):
    """A field left the set where the operation is defined (e.g. u < 0 under u^q)."""


class InvalidObstacleError(CCPlapError, ValueError):
    pass


class NonConvergenceError(CCPlapError, RuntimeError):
    """Iteration stopped without meeting its tolerance.

    ``last`` carries the last iterate (nodal array or GridFunction) and
    ``diverged`` distinguishes blow-up from stagnation.
    """

    def __init__(self, message, last=None, diverged=False, iterations=0):
        super().__init__(message)
        self.last = last
        self.diverged = diverged
        self.iterations = iterations

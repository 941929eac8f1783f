"""Exception types raised across the package."""


class RicciLabError(Exception):
    pass


class InvalidMetric(RicciLabError, ValueError):
    pass


class PoleSingular(InvalidMetric):
    """Profile does not close smoothly at a pole (|dpsi/ds| far from 1)."""


class StepRejected(RicciLabError):
    pass


class SingularityUnhandled(RicciLabError):
    """Curvature blew up and nothing resolved it.

    ``trace`` and ``state`` carry the run up to the blowup, when available.
    """

    def __init__(self, msg, trace=None, state=None):
        super().__init__(msg)
        self.trace = trace
        self.state = state


class PastExtinction(RicciLabError, ValueError):
    pass


class ConstraintError(RicciLabError, ValueError):
    pass


class NumericalFailure(RicciLabError):
    pass


class Inapplicable(RicciLabError):
    pass


class InvalidPath(RicciLabError, ValueError):
    pass


class ShootFailed(RicciLabError):
    pass


class ConfigError(RicciLabError, ValueError):
    pass


class SurgeryRefused(RicciLabError):
    pass


class SurgeryFailed(RicciLabError):
    pass

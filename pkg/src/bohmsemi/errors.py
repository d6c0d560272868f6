"""Exception types shared across the package."""


class BohmSemiError(Exception):
    pass


class ZeroNorm(BohmSemiError):
    """The wave function (or a slice of it) has vanishing L2 norm."""


class UnstableState(BohmSemiError):
    """A propagator produced non-finite amplitudes."""


class OutOfDomain(BohmSemiError):
    """A configuration point lies outside the grid."""


class FrameGap(BohmSemiError):
    """Stored wave-function frames do not cover the requested time span."""


class NodePoint(BohmSemiError):
    """Guidance velocity requested at a (numerical) node of the wave function."""


class MissingData(BohmSemiError):
    """A run directory lacks the trajectory files needed for a figure."""


class ConfigError(BohmSemiError):
    """Scenario configuration failed validation.

    ``field`` names the offending key (dotted path) when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field

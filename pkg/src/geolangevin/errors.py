"""Exception hierarchy shared by all modules."""


class GeoLangevinError(Exception):
    """Base class for every error raised by this package."""


class InvalidChartPoint(GeoLangevinError):
    pass


class SingularMetric(GeoLangevinError):
    pass


class NoTransition(GeoLangevinError):
    pass


class OutOfDomain(GeoLangevinError):
    pass


class ChartEscape(GeoLangevinError):
    """A trajectory left every chart of the atlas."""


class NotUnitState(GeoLangevinError):
    pass


class EnvelopeViolation(GeoLangevinError):
    """The rejection-sampling envelope was exceeded by the target density."""


class NonCompactBase(GeoLangevinError):
    pass


class InfeasibleConstants(GeoLangevinError):
    pass


class InsufficientSignal(GeoLangevinError):
    pass


class DegenerateGradient(GeoLangevinError):
    pass


class ConfigError(GeoLangevinError):
    pass


class CheckFailure(GeoLangevinError):
    pass

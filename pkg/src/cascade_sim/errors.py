"""Exception hierarchy shared by all modules."""


class CascadeError(Exception):
    """Base class for every error raised by :mod:`cascade_sim`."""


class ParamsError(CascadeError, ValueError):
    pass


class NonPositiveDetuning(ParamsError):
    pass


class NegativeRate(ParamsError):
    pass


class NonFinite(ParamsError):
    pass


class NegativeTime(CascadeError, ValueError):
    pass


class TimeBeforeSwitchOff(CascadeError, ValueError):
    pass


class EmptyWindow(CascadeError, ValueError):
    pass


class StepTooLarge(CascadeError, ValueError):
    """Raised when ``dt * ||M||`` exceeds the stability budget of the integrator."""


class NotADensityMatrix(CascadeError, ValueError):
    pass


class ZeroSurvivalProbability(CascadeError, ZeroDivisionError):
    pass


class ZeroNullClickProbability(CascadeError, ZeroDivisionError):
    pass


class ConfigError(CascadeError):
    """Problems with a key-value configuration file.

    ``line`` is the 1-based line number when the problem can be pinned to one.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingFile(ConfigError, FileNotFoundError):
    pass


class UnknownKey(ConfigError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ConfigParseError(ConfigError, ValueError):
    pass


class UnknownCommand(CascadeError, ValueError):
    pass


ParseError = ConfigParseError

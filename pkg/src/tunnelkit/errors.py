"""Exception hierarchy shared by all tunnelkit modules."""


class TunnelkitError(Exception):
    """Base class; carries an exit code for the command-line front end."""

    exit_code = 3


class ConfigError(TunnelkitError):
    exit_code = 2


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(ConfigError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class SymmetryViolation(TunnelkitError):
    pass


class NoConvergence(TunnelkitError):
    pass


class DegenerateWell(TunnelkitError):
    pass


class EnergyAboveBarrier(TunnelkitError):
    pass


class EmptySeries(TunnelkitError):
    pass


class ResonanceError(TunnelkitError):
    pass


class GridTooCoarse(TunnelkitError):
    pass


class ShellDrift(TunnelkitError):
    pass


class NoCrossing(TunnelkitError):
    pass


class CausticReached(TunnelkitError):
    pass


class PoorFit(TunnelkitError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NotSeparable(TunnelkitError):
    pass


class NoCriticalPoint(TunnelkitError):
    pass


class CoverageGap(TunnelkitError):
    pass


class DegenerateCriticalPoint(TunnelkitError):
    pass


class BoxTooSmall(TunnelkitError):
    pass


class GapViolation(TunnelkitError):
    exit_code = 4

"""
Error types for the FitzHugh-Nagumo splitting integrators
Every failure raised by the library derives from SplittingError so the CLI
can map it onto an exit code.
"""


class SplittingError(Exception):
    """Base class for all library errors"""


class ConfigurationError(SplittingError, ValueError):
    """Invalid grid, step size or experiment configuration"""


class DomainError(SplittingError, ValueError):
    """Argument outside the domain of a map (negative time, zero error, ...)"""


class RepresentationError(SplittingError):
    """Field handed over in the wrong (grid vs eigenbasis) representation"""


class ShapeError(SplittingError):
    """Arrays whose number of modes do not agree"""


class ContractError(SplittingError):
    """Noise increment of the wrong kind for the requested scheme"""


class ExperimentError(SplittingError):
    """Numerical failure, e.g. a splitting trajectory that blew up"""


class OutputError(SplittingError, OSError):
    """Result file could not be written"""

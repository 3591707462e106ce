"""Exception and warning types shared across the package."""


class StimQKDError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(StimQKDError, ValueError):
    pass


class GridMismatchError(StimQKDError, ValueError):
    pass


class UndersampledGridError(StimQKDError, ValueError):
    pass


class ZeroFieldError(StimQKDError, ValueError):
    pass


class NonUnitaryError(StimQKDError, ValueError):
    pass


class NoUnbiasedPairError(StimQKDError):
    pass


class CovarianceError(StimQKDError):
    pass


class InsufficientSamplesError(StimQKDError, ValueError):
    pass


class NoBracketError(StimQKDError):
    pass


class ConfigError(StimQKDError, ValueError):
    pass


class AliasingWarning(UserWarning):
    """The beam is approaching the edge of the periodic simulation window."""


class DegenerateEigenvalueWarning(UserWarning):
    pass

"""Exception hierarchy shared across the package."""


class PSFedGANError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(PSFedGANError, ValueError):
    pass


class ShapeError(PSFedGANError, ValueError):
    pass


class DataError(PSFedGANError, ValueError):
    """Malformed or inconsistent data (bad labels, bad IDX files)."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DecodeError(DataError):
    pass


class ProtocolError(PSFedGANError, RuntimeError):
    pass


class DesyncError(ProtocolError):
    """A message arrived out of step order; the twin generator can no longer be rebuilt."""


class UndefinedMetricError(PSFedGANError, ValueError):
    pass

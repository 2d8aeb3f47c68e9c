"""Exception hierarchy shared across the package."""


class SphereRegError(Exception):
    """Base class for all domain errors raised by spherereg."""


class ParseError(SphereRegError):
    """A file could not be parsed; carries the byte offset of the failure."""

    def __init__(self, message, path=None, offset=None):
        self.path = path
        self.offset = offset
        parts = [message]
        if path is not None:
            parts.append(f"in {path}")
        if offset is not None:
            parts.append(f"at byte offset {offset}")
        super().__init__(" ".join(parts))


class ConfigError(SphereRegError):
    """Inconsistent or unsupported configuration values."""


class DegeneratePatchError(SphereRegError):
    """Patch has too few points or zero total covariance weight."""


class DegenerateFrameError(SphereRegError):
    """Local frame is not uniquely defined (eigenvalue near-tie)."""


class OutOfRangeError(SphereRegError):
    """Coordinate lies outside the supported voxel domain."""


class RegistrationError(SphereRegError):
    """Registration could not produce a valid hypothesis."""

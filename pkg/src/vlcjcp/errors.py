"""Exception taxonomy shared across the simulator modules."""


class VlcJcpError(Exception):
    """Base class for all simulator errors."""


class SchemaError(VlcJcpError):
    """Scenario document is structurally malformed (missing/extra/ill-typed field)."""


class ValidationError(VlcJcpError):
    """Scenario violates a configuration invariant; message carries the field path."""


class GeometryError(VlcJcpError):
    """Degenerate geometry (zero distance, height outside the room, ...)."""


class DomainError(VlcJcpError):
    """Argument outside the mathematical domain of an operation."""


class NonNegativityError(VlcJcpError):
    """A transmit intensity went negative after biasing (invalid configuration)."""


class LengthError(VlcJcpError):
    """Sequence length incompatible with the required block structure."""


class FramingError(VlcJcpError):
    """Frame start/end marker mismatch."""


class CrcError(VlcJcpError):
    """Frame checksum mismatch."""


class RankError(VlcJcpError):
    """Dimming solve is rank deficient (more zones than receive branches)."""


class ScheduleError(VlcJcpError):
    """Pilot schedule is not bipolar LED-complete."""


class DegenerateChannelError(VlcJcpError):
    """All-zero channel estimate, detection undefined."""


class OutOfRangeError(VlcJcpError):
    """Measured RSS outside the invertible range of the forward model."""


class CollinearError(VlcJcpError):
    """Circle centers collinear, radical-axis solve rank deficient."""


class InsufficientCirclesError(VlcJcpError):
    """Too few usable iso-RSS circles to attempt a position fix."""


class EmptyError(VlcJcpError):
    """Empty sample set where at least one value is required."""

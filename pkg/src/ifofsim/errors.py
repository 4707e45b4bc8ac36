"""Exception types raised by the simulator."""


class SimulationError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SimulationError, ValueError):
    """Invalid or inconsistent configuration."""


class DimensionError(SimulationError, ValueError):
    """Array shapes or lengths do not match what an operation expects."""


class LayerCapacityError(ConfigError):
    """More layers requested than the DMRS configuration can separate."""


class DegenerateChannelError(SimulationError):
    """Channel has no energy, so power control cannot be applied."""


class BandwidthError(ConfigError):
    """Signal does not fit the optical/electrical bandwidth budget."""


class DegenerateInputError(SimulationError, ValueError):
    """Input carries no usable signal (e.g. an all-zero photocurrent)."""


class SyncError(SimulationError):
    """OFDM timing synchronization failed."""


class ConditioningError(SimulationError, ValueError):
    """Equalizer matrix is singular or too ill-conditioned to invert."""


class MissingDmrsError(SimulationError, ValueError):
    """Resource grid has no DMRS to estimate the channel from."""


class StageError(SimulationError):
    """Wraps an error raised inside one pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")

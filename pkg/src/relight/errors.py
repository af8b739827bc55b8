"""Exception types shared across the package."""


class RelightError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(RelightError, ValueError):
    """Tensor shape or channel count violates an operation's contract."""


class FormatError(RelightError, ValueError):
    """A file's contents do not match the expected on-disk format."""


class ConfigError(RelightError, ValueError):
    """Invalid configuration or missing required input."""


class StateError(RelightError, RuntimeError):
    """A cycle state is missing tensors required by the requested loss."""


class TrainingDiverged(RelightError, RuntimeError):
    """A loss became NaN/Inf during training; carries a diagnostic dump path."""

    def __init__(self, message: str, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path

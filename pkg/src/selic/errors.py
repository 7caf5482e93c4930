"""Exception hierarchy shared across the codec.

The CLI maps these onto its exit-code contract: usage problems exit 2,
data problems exit 3, model/backend problems exit 4.
"""


class SelicError(Exception):
    """Base class for all codec errors."""


class InvalidInputError(SelicError):
    """An input value violates a precondition (empty image, bad range ...)."""


class ShapeError(SelicError):
    """A tensor does not match the shape contract of the operation."""


class ConfigError(SelicError):
    """A configuration value or file is invalid or contains unknown keys."""


class CausalityError(SelicError):
    """Slice parameters were requested out of autoregressive order."""


class BackendUnavailableError(SelicError):
    """A pretrained semantic backend could not be loaded."""


class EncodeError(SelicError):
    """Entropy encoding failed (symbol outside its table's alphabet ...)."""


class DecodeError(SelicError):
    """A bitstream is truncated, corrupt, or internally inconsistent."""


class CheckpointError(SelicError):
    """A checkpoint is missing, unreadable, or inconsistent with the model."""


class DataError(SelicError):
    """A dataset, CSV, or evaluation input is unusable."""


class TrainingDivergedError(SelicError):
    """The training loss became non-finite."""

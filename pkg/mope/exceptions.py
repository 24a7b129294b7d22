# Exception types raised across the mope package


class MopeError(Exception):
    """Base class for every error raised by mope."""


class ShapeError(MopeError, ValueError):
    pass


class SpecError(MopeError, ValueError):
    """Inconsistent network description."""

    def __init__(self, message, layer_index=None):
        super().__init__(message)
        self.layer_index = layer_index


class TapeError(MopeError, ValueError):
    pass


class ConfigError(MopeError, ValueError):
    pass


class TrainingDivergedError(MopeError, RuntimeError):
    def __init__(self, iteration, message=None):
        super().__init__(message or f"Non-finite loss at iteration {iteration}")
        self.iteration = iteration


class WeightFileError(MopeError, OSError):
    """Base class for weight file problems."""


class WeightFormatError(WeightFileError):
    pass


class WeightTruncatedError(WeightFileError):
    def __init__(self, tensor_name, message=None):
        super().__init__(message or f"Weight file truncated while reading tensor {tensor_name!r}")
        self.tensor_name = tensor_name


class UnknownTensorError(WeightFileError):
    def __init__(self, tensor_name, message=None):
        super().__init__(message or f"Unknown tensor name {tensor_name!r}")
        self.tensor_name = tensor_name

class STLinearError(Exception):
    """Base class for all package errors."""


class DimensionError(STLinearError, ValueError):
    pass


class TrainingError(STLinearError, RuntimeError):
    pass


class CheckError(STLinearError, RuntimeError):
    pass


class LoadError(STLinearError, ValueError):
    pass


class NormalizationError(STLinearError, ValueError):
    pass


class CheckpointError(STLinearError, ValueError):
    pass


class LossError(STLinearError, ValueError):
    pass

"""Exception types shared across the package."""


class LdamError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(LdamError):
    """Shapes of the operands do not fit the requested operation."""


class ConfigError(LdamError):
    """A configuration value is invalid or inconsistent."""


class GraphError(LdamError):
    """The autodiff graph is in a state that cannot be differentiated."""


class DataFormatError(LdamError):
    """A data or embedding file violates its documented format."""


class CheckpointError(LdamError):
    """A checkpoint file is missing, corrupt, or incompatible."""


class OptimError(LdamError):
    """The optimizer was driven with inconsistent state or gradients."""


class MetricsError(LdamError):
    """A metric is undefined for the given inputs (for example, AUC with
    a single class) or was requested with invalid options."""


class NonFiniteLossError(LdamError):
    """Training produced a NaN or Inf loss.

    Carries enough context (epoch, batch, term values) to locate the
    offending step.
    """

    def __init__(self, message, epoch=None, batch=None, term1=None, term2=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.term1 = term1
        self.term2 = term2

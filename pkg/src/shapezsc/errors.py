"""Exception types shared across the package."""


class ShapeZscError(Exception):
    """Base class for all package errors."""


class ParseError(ShapeZscError, ValueError):
    pass


class ValidationError(ShapeZscError, ValueError):
    pass


class HorizonExceeded(ShapeZscError, RuntimeError):
    pass


class DimensionMismatch(ShapeZscError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class InvalidCount(ShapeZscError, ValueError):
    pass


class InsufficientSamples(ShapeZscError, ValueError):
    pass


class InsufficientData(ShapeZscError, ValueError):
    pass


class InsufficientMembers(ShapeZscError, ValueError):
    pass


class NonFiniteLoss(ShapeZscError, FloatingPointError):
    pass


class EmptyData(ShapeZscError, ValueError):
    pass


class ProviderError(ShapeZscError):
    """Failure talking to a text-generation provider."""


class ProviderUnreachable(ProviderError):
    pass


class ProviderTimeout(ProviderError):
    pass


class ExhaustedRetries(ShapeZscError):
    def __init__(self, last_failure):
        super().__init__(f"no valid shaping set after retries; last failure: {last_failure}")
        self.last_failure = last_failure


class CheckpointError(ShapeZscError, ValueError):
    pass

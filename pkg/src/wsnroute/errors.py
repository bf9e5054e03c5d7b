"""Exception types shared across the package."""


class WsnRouteError(Exception):
    pass


class ParameterError(WsnRouteError, ValueError):
    """Invalid model or simulation parameters."""


class StabilityViolation(ParameterError):
    pass


class UniformizationViolation(ParameterError):
    pass


class InvalidTruncation(ParameterError):
    pass


class NonPositiveRate(ParameterError):
    pass


class UnstableUnderPolicy(WsnRouteError, ValueError):
    """The fixed policy has no stationary regime at these rates."""


class OutOfRangeState(WsnRouteError, IndexError):
    pass


class DimensionMismatch(WsnRouteError, ValueError):
    pass


class TraceError(WsnRouteError, ValueError):
    pass


class ParseError(TraceError):
    def __init__(self, lineno: int, text: str):
        super().__init__(f"line {lineno}: cannot parse timestamp {text!r}")
        self.lineno = lineno
        self.text = text


class NonMonotoneTrace(TraceError):
    pass


class EmptyTrace(TraceError):
    pass

"""Exception hierarchy shared by all geoflow modules."""


class GeoflowError(Exception):
    """Base class for every error raised by geoflow."""


class ParseError(GeoflowError):
    """Malformed expression text.

    ``offset`` is the 0-based byte offset into the source string and
    ``expected`` the set of token kinds that would have been accepted there.
    """

    def __init__(self, message, text="", offset=0, expected=()):
        self.text = text
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(detail)


class UnknownIdentifierError(ParseError):
    pass


class EvaluationError(GeoflowError):
    """A field evaluated to a non-finite value or hit a domain error."""

    def __init__(self, message, point=None):
        self.point = point
        if point is not None:
            message = f"{message} at {point}"
        super().__init__(message)


class VarianceError(GeoflowError, TypeError):
    """Contraction between slots of the same variance."""


class FrameError(GeoflowError):
    """Singular or inconsistent coordinate frame map."""


class MetricError(GeoflowError):
    """Mass metric not symmetric positive definite / not invertible."""


class ContractError(GeoflowError):
    """An operation was handed inputs violating its preconditions."""


class IntegrationError(GeoflowError):
    """ODE integration failed; ``last_state`` holds the last good (t, y)."""

    def __init__(self, message, last_state=None):
        self.last_state = last_state
        super().__init__(message)


class NumericError(GeoflowError):
    """Quadrature or root finding failed to converge."""


class ValidationError(GeoflowError):
    """Scenario file failed schema validation."""

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)

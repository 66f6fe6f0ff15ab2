"""Exception hierarchy shared by all avgkit modules."""


class AvgkitError(Exception):
    """Base class for every error raised by avgkit."""


class ArgumentError(AvgkitError, ValueError):
    pass


class ParseError(AvgkitError):
    """Positioned parse failure; ``offset`` is a byte offset into the UTF-8 source."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.message = message
        self.offset = offset


class ExprSyntaxError(ParseError):
    pass


class UnknownIdentifierError(ParseError):
    pass


class VariableRangeError(ParseError):
    pass


class NonConstantExponentError(ParseError):
    pass


class DomainError(AvgkitError, ArithmeticError):
    """Division by zero, log of a nonpositive number, overflow, etc."""


class ResourceError(AvgkitError):
    pass


class IntegrationError(AvgkitError):
    pass


class BlowUpError(IntegrationError):
    def __init__(self, message, time):
        super().__init__(f"{message} at t={time!r}")
        self.time = time


class MaxStepsExceeded(IntegrationError):
    pass


class SystemFileError(AvgkitError):
    pass


class PeriodicityError(SystemFileError):
    def __init__(self, message, max_deviation):
        super().__init__(message)
        self.max_deviation = max_deviation


class ConvergenceError(AvgkitError):
    """Iteration did not converge; ``result`` holds the last iterate when available."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class FiniteDifferenceError(AvgkitError):
    pass


class AllOrdersVanish(AvgkitError):
    def __init__(self, order, evidence):
        super().__init__(f"all averaged functions vanish up to order {order}")
        self.order = order
        self.evidence = evidence

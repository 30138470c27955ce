"""Exception hierarchy shared by every module of the package."""


class OmegaError(Exception):
    """Base class for all package errors."""


class ParseError(OmegaError):
    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = tuple(sorted(set(expected)))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at byte {offset}{detail}")


class UnknownIdentifier(ParseError):
    def __init__(self, name, offset):
        self.name = name
        super().__init__(f"unknown identifier {name!r}", offset)


class EvaluationError(OmegaError):
    pass


class Overflow(EvaluationError):
    """An intermediate magnitude left the safe range (> 1e150 or non-finite)."""

    def __init__(self, message="intermediate magnitude exceeds 1e150", index=None):
        self.index = index
        if index is not None:
            message = f"{message} (composition index j={index})"
        super().__init__(message)


class DivisionNearZero(EvaluationError):
    def __init__(self, message="divisor magnitude below 1e-300", index=None):
        self.index = index
        if index is not None:
            message = f"{message} (composition index j={index})"
        super().__init__(message)


class NonConvergent(OmegaError):
    pass


class DomainViolation(OmegaError):
    pass


class SingularityProximity(DomainViolation):
    pass


class NotConstantInZ(OmegaError):
    pass


class NotPeriodic(OmegaError):
    pass


class UnknownBuiltin(OmegaError):
    pass


class ArgumentSector(DomainViolation):
    pass


class DenominatorZero(OmegaError):
    pass


class CutoffTooSmall(OmegaError):
    pass

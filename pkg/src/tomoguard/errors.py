"""Exception hierarchy.

Everything raised on purpose by the package derives from ``TomoguardError``
(itself a ``ValueError``) so callers can catch validation problems in one
place while still distinguishing the specific failure.
"""


class TomoguardError(ValueError):
    """Base class for all package errors."""


class InvariantViolation(TomoguardError):
    pass


class CycleDetected(TomoguardError):
    pass


class DisconnectedNode(TomoguardError):
    pass


class NonPositiveDelay(TomoguardError):
    pass


class DuplicateEdge(TomoguardError):
    pass


class SpaceTooLarge(TomoguardError):
    pass


class SpaceTooSmall(TomoguardError):
    pass


class DimensionMismatch(TomoguardError):
    pass


class LeafSetMismatch(TomoguardError):
    pass


class NegativeEntry(TomoguardError):
    pass


class NotRealizable(TomoguardError):
    pass


class NonFiniteOutput(TomoguardError):
    pass


class NonFiniteValue(TomoguardError):
    pass


class EmptySpace(TomoguardError):
    pass


class EmptySupport(EmptySpace):
    pass


class LeafCountExceedsDim(TomoguardError):
    pass


class DivergedObjective(TomoguardError):
    pass


class ChainDiverged(TomoguardError):
    pass


class PremiseViolated(TomoguardError):
    pass


class NoCandidate(TomoguardError):
    pass


class ConfigInvalid(TomoguardError):
    pass

"""Exception hierarchy.

``DomainError`` subclasses signal infeasible inputs or failed numerics (CLI exit
code 1); ``ParseError`` signals malformed input documents (CLI exit code 2).
"""


class CycDDEError(Exception):
    """Base class for all package errors."""


class DomainError(CycDDEError):
    pass


class ParseError(CycDDEError, ValueError):
    pass


# kernels
class KernelError(DomainError, ValueError):
    pass


class DiracDensityUndefined(KernelError):
    pass


class NegativeTime(KernelError):
    pass


class LaplaceDiverges(KernelError):
    pass


class InvalidTailMass(KernelError):
    pass


# model
class ModelError(DomainError, ValueError):
    pass


class MissingParameter(ModelError):
    pass


class InfeasibleParameters(ModelError):
    pass


# simulate
class InsufficientHistory(DomainError):
    pass


class StepTooLarge(DomainError):
    pass


class UnsupportedKernel(DomainError):
    pass


class OutOfSpan(DomainError):
    pass


# reduction
class NonContiguousElimination(DomainError):
    pass


class ReductionError(DomainError):
    pass


# stability
class ZeroClearanceAtCandidate(DomainError):
    pass


class PoleAtEvaluation(DomainError):
    pass


class CharacteristicMismatch(DomainError):
    pass


class EquilibriumLostDuringSweep(DomainError):
    pass


class NotAnEquilibrium(DomainError):
    pass

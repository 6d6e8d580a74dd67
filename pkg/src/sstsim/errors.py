"""Exception hierarchy for sstsim."""

from typing import Optional


class SstSimError(Exception):
    """Base class for every error raised by sstsim."""


class PatternViolation(SstSimError, ValueError):
    """A matrix does not satisfy the requested N:M sparsity pattern."""

    def __init__(self, row: int, group: int, level: str, nonzeros: int):
        self.row = row
        self.group = group
        self.level = level
        self.nonzeros = nonzeros
        super().__init__(
            f"Row {row}, group {group} holds {nonzeros} non-zeros, "
            f"too many for level {level}"
        )


class IndexOutOfGroup(SstSimError, ValueError):
    """A stored position index points outside its group."""


class ArityMismatch(SstSimError, ValueError):
    """An operand lane carries the wrong number of values for the active mode."""


class ExtractOverflow(SstSimError, RuntimeError):
    """The slice extraction buffer ran out of slots."""


class ModeChangeError(SstSimError, RuntimeError):
    """Precision or sparsity level changed while a tile was in flight."""


class CapabilityError(SstSimError, ValueError):
    """The fabric cannot execute the requested sparsity level."""


class DimensionError(SstSimError, ValueError):
    """Problem dimensions are inconsistent or not aligned to the fabric."""


class BandwidthInfeasible(SstSimError, RuntimeError):
    """A bank would have to deliver more bits in one cycle than its width."""


class SchemaError(SstSimError, ValueError):
    """An input file does not follow its documented schema."""

    def __init__(self, message: str, source: Optional[str] = None, field: str = ""):
        self.source = source
        self.field = field
        location = source or "<input>"
        if field:
            location = f"{location}: {field}"
        super().__init__(f"{location}: {message}")


class VerificationFailure(SstSimError):
    """Simulator output disagrees with the reference GEMM."""

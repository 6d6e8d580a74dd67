"""Index-based N:M structured-sparse matrix format.

Every group of ``group_size`` consecutive row elements keeps at most
``nonzeros_per_group`` values. The compressed form stores those values plus a
2-bit position per value.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional, Tuple

import numpy as np
import numpy.typing as npt

from .errors import IndexOutOfGroup, PatternViolation
from .numerics import is_bfloat16_representable, to_bfloat16

INDEX_BITS = 2


class SparsityLevel(Enum):
    """Supported sparsity modes of an SPE."""

    DENSE = "dense"
    S2OF4 = "2:4"
    S1OF3 = "1:3"
    S1OF4 = "1:4"

    @property
    def group_size(self) -> int:
        """M in N:M; 1 for dense."""
        return _GEOMETRY[self][0]

    @property
    def nonzeros_per_group(self) -> int:
        """N in N:M; 1 for dense."""
        return _GEOMETRY[self][1]

    @property
    def speedup_factor(self) -> int:
        """Reduction-length divisor relative to dense streaming."""
        return self.group_size // self.nonzeros_per_group

    @property
    def is_sparse(self) -> bool:
        """True for the three N:M modes."""
        return self is not SparsityLevel.DENSE

    @property
    def b_lanes(self) -> int:
        """Number of B values an SPE receives per cycle in this mode."""
        return self.group_size

    @classmethod
    def parse(cls, text: str) -> "SparsityLevel":
        """Parse labels such as ``dense``, ``2:4``, ``1of3`` or ``S1OF4``."""
        key = text.strip().lower().replace("of", ":").lstrip("s")
        for level in cls:
            if level.value == key:
                return level
        valid = ", ".join(level.value for level in cls)
        raise ValueError(f"Unknown sparsity level '{text}' (expected one of {valid})")


_GEOMETRY = {
    SparsityLevel.DENSE: (1, 1),
    SparsityLevel.S2OF4: (4, 2),
    SparsityLevel.S1OF3: (3, 1),
    SparsityLevel.S1OF4: (4, 1),
}


class Precision(Enum):
    """Operand precision and its accumulator format."""

    INT8 = "int8"
    BFLOAT16 = "bfloat16"

    @property
    def value_bits(self) -> int:
        """Width of one operand in bits."""
        return 8 if self is Precision.INT8 else 16

    @property
    def accumulator(self) -> str:
        """Accumulator kind: ``int32`` or ``fp32``."""
        return "int32" if self is Precision.INT8 else "fp32"

    @property
    def storage_dtype(self) -> type:
        """numpy dtype used to hold operand values."""
        return np.int8 if self is Precision.INT8 else np.float32

    @classmethod
    def parse(cls, text: str) -> "Precision":
        """Parse ``int8``, ``bfloat16`` or ``bf16``."""
        key = text.strip().lower()
        if key == "bf16":
            key = "bfloat16"
        for precision in cls:
            if precision.value == key:
                return precision
        raise ValueError(f"Unknown precision '{text}' (expected int8 or bfloat16)")


def _check_domain(data: npt.NDArray[Any], precision: Precision) -> None:
    if precision is Precision.INT8:
        if data.size and (data.min() < -128 or data.max() > 127):
            raise ValueError("int8 matrix entries must lie in [-128, 127]")
    elif not is_bfloat16_representable(data):
        raise ValueError("bfloat16 matrix entries must be exactly representable")


def _is_integral(data: npt.NDArray[Any]) -> bool:
    """True for float arrays holding only whole numbers."""
    if data.dtype.kind != "f":
        return False
    return bool(np.all(np.isfinite(data) & (data == np.round(data))))


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """Row-major dense matrix in an operand precision."""

    data: npt.NDArray[Any]
    precision: Precision

    def __post_init__(self) -> None:
        if self.data.ndim != 2:
            raise ValueError(f"Expected a 2-D array, got {self.data.ndim} dimensions")

    @classmethod
    def from_values(cls, values: Any, precision: Precision) -> "DenseMatrix":
        """
        Build a matrix from nested lists or an array, checking the value domain.

        Raises:
            ValueError: If a value is outside the precision's domain or an
                int8 entry is not a whole number
        """
        raw = np.asarray(values)
        if raw.ndim == 1 and raw.size == 0:
            raw = raw.reshape(0, 0)
        if precision is Precision.INT8:
            if raw.dtype.kind not in "iu" and not _is_integral(raw):
                raise ValueError("int8 matrix entries must be whole numbers")
            wide = raw.astype(np.int64)
            _check_domain(wide, precision)
            return cls(wide.astype(np.int8), precision)
        f32 = raw.astype(np.float32)
        _check_domain(f32, precision)
        return cls(f32, precision)

    @classmethod
    def from_floats(cls, values: Any) -> "DenseMatrix":
        """Round arbitrary reals to bfloat16 and wrap them."""
        raw = np.asarray(values, dtype=np.float64)
        return cls(to_bfloat16(raw).reshape(raw.shape), Precision.BFLOAT16)

    @classmethod
    def zeros(cls, rows: int, cols: int, precision: Precision) -> "DenseMatrix":
        return cls(np.zeros((rows, cols), dtype=precision.storage_dtype), precision)

    @property
    def rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def cols(self) -> int:
        return int(self.data.shape[1])

    def padded(self, rows: int, cols: int) -> "DenseMatrix":
        """Zero-pad to at least ``rows`` × ``cols``."""
        if rows < self.rows or cols < self.cols:
            raise ValueError("Padding cannot shrink a matrix")
        out = np.zeros((rows, cols), dtype=self.data.dtype)
        out[: self.rows, : self.cols] = self.data
        return DenseMatrix(out, self.precision)

    def equals(self, other: "DenseMatrix") -> bool:
        """Element-wise equality including shape and precision."""
        return (
            self.precision is other.precision
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )

    def zero_fraction(self) -> float:
        """Fraction of entries equal to zero."""
        if self.data.size == 0:
            return 0.0
        return float(np.count_nonzero(self.data == 0)) / self.data.size


@dataclass(frozen=True, eq=False)
class CompressedMatrix:
    """Non-zero values and 2-bit group positions of an N:M sparse matrix."""

    level: SparsityLevel
    precision: Precision
    rows: int
    logical_cols: int
    values: npt.NDArray[Any]
    indices: npt.NDArray[np.uint8]
    cols: int = field(default=-1)

    def __post_init__(self) -> None:
        if not self.level.is_sparse:
            raise ValueError("A compressed matrix needs a sparse level")
        if self.logical_cols % self.level.group_size:
            raise ValueError(
                f"logical_cols={self.logical_cols} is not a multiple of "
                f"group size {self.level.group_size}"
            )
        expected = (self.rows, self.stored_per_row)
        if self.values.shape != expected or self.indices.shape != expected:
            raise ValueError(
                f"values/indices must have shape {expected}, got "
                f"{self.values.shape} and {self.indices.shape}"
            )
        if self.cols < 0:
            object.__setattr__(self, "cols", self.logical_cols)

    @property
    def groups_per_row(self) -> int:
        return self.logical_cols // self.level.group_size

    @property
    def stored_per_row(self) -> int:
        return self.groups_per_row * self.level.nonzeros_per_group

    def storage_bits(self) -> int:
        """Bits occupied by values plus indices."""
        return self.rows * self.stored_per_row * (self.precision.value_bits + INDEX_BITS)

    def equals(self, other: "CompressedMatrix") -> bool:
        return (
            self.level is other.level
            and self.precision is other.precision
            and self.logical_cols == other.logical_cols
            and bool(np.array_equal(self.values, other.values))
            and bool(np.array_equal(self.indices, other.indices))
        )


def _grouped(m: DenseMatrix, level: SparsityLevel) -> npt.NDArray[Any]:
    """View rows as (rows, groups, group_size) after zero-padding the columns."""
    gs = level.group_size
    logical = -(-m.cols // gs) * gs
    padded = m.padded(m.rows, logical).data if logical != m.cols else m.data
    return padded.reshape(m.rows, logical // gs, gs)


def first_violation(
    m: DenseMatrix, level: SparsityLevel
) -> Optional[Tuple[int, int, int]]:
    """Return ``(row, group, nonzeros)`` of the first offending group, if any."""
    if not level.is_sparse or m.data.size == 0:
        return None
    counts = np.count_nonzero(_grouped(m, level), axis=2)
    bad = np.argwhere(counts > level.nonzeros_per_group)
    if bad.size == 0:
        return None
    row, group = (int(v) for v in bad[0])
    return row, group, int(counts[row, group])


def validate_pattern(m: DenseMatrix, level: SparsityLevel) -> bool:
    """True iff every row group holds at most ``nonzeros_per_group`` non-zeros."""
    return first_violation(m, level) is None


def encode(m: DenseMatrix, level: SparsityLevel) -> CompressedMatrix:
    """
    Compress a conforming matrix.

    Non-zeros are kept in ascending position order. Groups with fewer
    non-zeros than the level stores get explicit zeros at the smallest unused
    positions, so indices inside a group are always strictly increasing.

    Raises:
        ValueError: If level is dense
        PatternViolation: On the first group breaking the pattern
    """
    if not level.is_sparse:
        raise ValueError("Dense matrices are not compressed")
    violation = first_violation(m, level)
    if violation is not None:
        row, group, count = violation
        raise PatternViolation(row, group, level.value, count)

    gs, nz = level.group_size, level.nonzeros_per_group
    grouped = _grouped(m, level)
    positions = np.arange(gs)
    # non-zeros first, then unused positions, each in ascending order
    key = (grouped == 0).astype(np.int64) * gs + positions
    chosen = np.sort(np.argsort(key, axis=2, kind="stable")[:, :, :nz], axis=2)
    values = np.take_along_axis(grouped, chosen, axis=2)
    rows, groups = grouped.shape[0], grouped.shape[1]
    return CompressedMatrix(
        level=level,
        precision=m.precision,
        rows=rows,
        logical_cols=groups * gs,
        values=values.reshape(rows, groups * nz).astype(m.data.dtype),
        indices=chosen.reshape(rows, groups * nz).astype(np.uint8),
        cols=m.cols,
    )


def decode(c: CompressedMatrix) -> DenseMatrix:
    """
    Expand a compressed matrix to ``rows`` × ``logical_cols``.

    Raises:
        IndexOutOfGroup: If any stored index is outside its group
    """
    gs, nz = c.level.group_size, c.level.nonzeros_per_group
    if c.indices.size and int(c.indices.max()) >= gs:
        row, pos = (int(v) for v in np.argwhere(c.indices >= gs)[0])
        raise IndexOutOfGroup(
            f"Index {int(c.indices[row, pos])} at row {row}, slot {pos} "
            f"exceeds group size {gs} for level {c.level.value}"
        )
    groups = c.groups_per_row
    dense = np.zeros((c.rows, groups, gs), dtype=c.values.dtype)
    np.put_along_axis(
        dense,
        c.indices.reshape(c.rows, groups, nz).astype(np.int64),
        c.values.reshape(c.rows, groups, nz),
        axis=2,
    )
    return DenseMatrix(dense.reshape(c.rows, c.logical_cols), c.precision)


def prune_magnitude(m: DenseMatrix, level: SparsityLevel) -> DenseMatrix:
    """
    Keep the largest-magnitude entries of every group, zero the rest.

    Ties go to the lower position.
    """
    if not level.is_sparse:
        raise ValueError("Pruning needs a sparse level")
    if m.data.size == 0:
        return m
    grouped = _grouped(m, level)
    magnitude = np.abs(grouped.astype(np.float64))
    order = np.argsort(-magnitude, axis=2, kind="stable")
    keep = np.zeros(grouped.shape, dtype=bool)
    np.put_along_axis(keep, order[:, :, : level.nonzeros_per_group], True, axis=2)
    pruned = np.where(keep, grouped, np.zeros_like(grouped))
    flat = pruned.reshape(m.rows, -1)[:, : m.cols]
    return DenseMatrix(np.ascontiguousarray(flat, dtype=m.data.dtype), m.precision)


def compression_ratio(level: SparsityLevel, p: Precision) -> float:
    """Dense bits over compressed bits (values plus 2-bit indices)."""
    if not level.is_sparse:
        return 1.0
    dense_bits = level.group_size * p.value_bits
    return dense_bits / (level.nonzeros_per_group * (p.value_bits + INDEX_BITS))


def bitmap_compression_ratio(level: SparsityLevel, p: Precision) -> float:
    """Ratio for a one-presence-bit-per-element bitmap format."""
    if not level.is_sparse:
        raise ValueError("Bitmap ratio is only defined for sparse levels")
    dense_bits = level.group_size * p.value_bits
    return dense_bits / (level.group_size + level.nonzeros_per_group * p.value_bits)


def dense_storage_bits(rows: int, cols: int, p: Precision) -> int:
    return rows * cols * p.value_bits

"""Unit tests for the N:M sparse matrix format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sstsim.errors import IndexOutOfGroup, PatternViolation
from sstsim.sparse_format import (
    CompressedMatrix,
    DenseMatrix,
    Precision,
    SparsityLevel,
    bitmap_compression_ratio,
    compression_ratio,
    decode,
    encode,
    first_violation,
    prune_magnitude,
    validate_pattern,
)
from tests.fixtures import random_bf16, random_int8, random_nonzero_int8

pytestmark = pytest.mark.unit

SPARSE_LEVELS = [SparsityLevel.S2OF4, SparsityLevel.S1OF3, SparsityLevel.S1OF4]


def test_level_geometry() -> None:
    """Group sizes, non-zeros and speedups of every level."""
    assert SparsityLevel.DENSE.group_size == 1
    assert SparsityLevel.DENSE.speedup_factor == 1
    assert (SparsityLevel.S2OF4.group_size, SparsityLevel.S2OF4.nonzeros_per_group) == (4, 2)
    assert SparsityLevel.S1OF3.speedup_factor == 3
    assert SparsityLevel.S1OF4.speedup_factor == 4
    assert SparsityLevel.S2OF4.speedup_factor == 2
    assert not SparsityLevel.DENSE.is_sparse


def test_level_and_precision_parsing() -> None:
    """Labels parse in their common spellings."""
    assert SparsityLevel.parse("2:4") is SparsityLevel.S2OF4
    assert SparsityLevel.parse("1of3") is SparsityLevel.S1OF3
    assert SparsityLevel.parse("S1OF4") is SparsityLevel.S1OF4
    assert SparsityLevel.parse("Dense") is SparsityLevel.DENSE
    assert Precision.parse("bf16") is Precision.BFLOAT16
    assert Precision.parse("INT8") is Precision.INT8
    with pytest.raises(ValueError):
        SparsityLevel.parse("3:4")
    with pytest.raises(ValueError):
        Precision.parse("fp8")


@pytest.mark.parametrize(
    "level,precision,expected",
    [
        (SparsityLevel.S2OF4, Precision.INT8, 1.60),
        (SparsityLevel.S2OF4, Precision.BFLOAT16, 1.78),
        (SparsityLevel.S1OF3, Precision.INT8, 2.40),
        (SparsityLevel.S1OF3, Precision.BFLOAT16, 2.67),
        (SparsityLevel.S1OF4, Precision.INT8, 3.20),
        (SparsityLevel.S1OF4, Precision.BFLOAT16, 3.56),
    ],
)
def test_compression_ratios(
    level: SparsityLevel, precision: Precision, expected: float
) -> None:
    """Index-format ratios match the published two-decimal values."""
    assert compression_ratio(level, precision) == pytest.approx(expected, abs=0.01)


def test_dense_compression_ratio_is_one() -> None:
    assert compression_ratio(SparsityLevel.DENSE, Precision.INT8) == 1.0


def test_index_format_beats_bitmap_at_one_of_four() -> None:
    """Index storage is 20% (int8) and 11% (bfloat16) denser than a bitmap at 1:4."""
    for precision, advantage in ((Precision.INT8, 0.20), (Precision.BFLOAT16, 0.11)):
        ratio = compression_ratio(SparsityLevel.S1OF4, precision)
        bitmap = bitmap_compression_ratio(SparsityLevel.S1OF4, precision)
        assert ratio / bitmap - 1 == pytest.approx(advantage, abs=0.01)
    # 2:4 int8 ties
    assert bitmap_compression_ratio(
        SparsityLevel.S2OF4, Precision.INT8
    ) == pytest.approx(compression_ratio(SparsityLevel.S2OF4, Precision.INT8))


def test_from_values_rejects_out_of_range_int8() -> None:
    with pytest.raises(ValueError):
        DenseMatrix.from_values([[200]], Precision.INT8)


def test_from_values_rejects_fractional_int8() -> None:
    with pytest.raises(ValueError, match="whole numbers"):
        DenseMatrix.from_values([[1.5, -2.7]], Precision.INT8)
    with pytest.raises(ValueError):
        DenseMatrix.from_values([[float("nan")]], Precision.INT8)
    assert DenseMatrix.from_values(np.array([[2.0, -3.0]]), Precision.INT8).data.tolist() == [[2, -3]]


def test_from_values_rejects_unrepresentable_bfloat16() -> None:
    with pytest.raises(ValueError):
        DenseMatrix.from_values([[1.0 + 2**-10]], Precision.BFLOAT16)


def test_validate_pattern_reports_first_offender() -> None:
    """The first group with too many non-zeros is named in the error."""
    m = DenseMatrix.from_values([[1, 0, 0, 2, 0, 0, 0, 0], [1, 2, 0, 0, 0, 0, 0, 0]], Precision.INT8)
    assert validate_pattern(m, SparsityLevel.S2OF4)
    assert not validate_pattern(m, SparsityLevel.S1OF4)
    assert first_violation(m, SparsityLevel.S1OF4) == (0, 0, 2)

    with pytest.raises(PatternViolation) as excinfo:
        encode(m, SparsityLevel.S1OF4)
    assert excinfo.value.row == 0
    assert excinfo.value.group == 0
    assert excinfo.value.nonzeros == 2


def test_dense_level_accepts_everything() -> None:
    m = DenseMatrix.from_values([[1, 2, 3, 4]], Precision.INT8)
    assert validate_pattern(m, SparsityLevel.DENSE)


def test_encode_fills_missing_slots_with_explicit_zeros() -> None:
    """Underfull groups store zeros at the smallest unused positions."""
    m = DenseMatrix.from_values([[0, 5, 0, 0, 0, 0, 0, 0]], Precision.INT8)
    c = encode(m, SparsityLevel.S2OF4)
    assert c.values.tolist() == [[0, 5, 0, 0]]
    assert c.indices.tolist() == [[0, 1, 0, 1]]


def test_encode_keeps_positions_in_ascending_order() -> None:
    m = DenseMatrix.from_values([[0, 0, 7, 3]], Precision.INT8)
    c = encode(m, SparsityLevel.S2OF4)
    assert c.values.tolist() == [[7, 3]]
    assert c.indices.tolist() == [[2, 3]]


def test_encode_pads_ragged_columns() -> None:
    """Columns that do not fill the last group are zero-padded logically."""
    m = DenseMatrix.from_values([[4, 0, 0, 0, 9]], Precision.INT8)
    c = encode(m, SparsityLevel.S1OF4)
    assert c.cols == 5
    assert c.logical_cols == 8
    assert c.values.tolist() == [[4, 9]]
    assert c.indices.tolist() == [[0, 0]]
    assert decode(c).data.tolist() == [[4, 0, 0, 0, 9, 0, 0, 0]]


def test_encode_rejects_dense_level() -> None:
    m = DenseMatrix.from_values([[1]], Precision.INT8)
    with pytest.raises(ValueError):
        encode(m, SparsityLevel.DENSE)


def test_decode_rejects_index_outside_group() -> None:
    """A 1:3 group has positions 0..2 only."""
    bad = CompressedMatrix(
        level=SparsityLevel.S1OF3,
        precision=Precision.INT8,
        rows=1,
        logical_cols=3,
        values=np.array([[5]], dtype=np.int8),
        indices=np.array([[3]], dtype=np.uint8),
    )
    with pytest.raises(IndexOutOfGroup):
        decode(bad)


def test_compressed_storage_bits() -> None:
    m = prune_magnitude(random_nonzero_int8(4, 16, seed=1), SparsityLevel.S2OF4)
    c = encode(m, SparsityLevel.S2OF4)
    assert c.storage_bits() == 4 * 8 * (8 + 2)
    dense_bits = 4 * 16 * 8
    assert dense_bits / c.storage_bits() == pytest.approx(1.6)


@pytest.mark.parametrize("level", SPARSE_LEVELS)
def test_prune_forces_exact_zero_fraction(level: SparsityLevel) -> None:
    """A matrix without zeros keeps exactly N of every M entries."""
    m = random_nonzero_int8(64, 48, seed=3)
    pruned = prune_magnitude(m, level)
    expected = 1 - level.nonzeros_per_group / level.group_size
    assert pruned.zero_fraction() == pytest.approx(expected)
    assert validate_pattern(pruned, level)


def test_prune_one_of_four_gives_75_percent_zeros() -> None:
    pruned = prune_magnitude(random_nonzero_int8(64, 64, seed=11), SparsityLevel.S1OF4)
    assert pruned.zero_fraction() == 0.75


def test_prune_keeps_largest_magnitudes() -> None:
    m = DenseMatrix.from_values([[1, -4, 3, 2]], Precision.INT8)
    assert prune_magnitude(m, SparsityLevel.S2OF4).data.tolist() == [[0, -4, 3, 0]]


def test_prune_breaks_ties_toward_lower_position() -> None:
    m = DenseMatrix.from_values([[2, 2, 2, 2]], Precision.INT8)
    assert prune_magnitude(m, SparsityLevel.S1OF4).data.tolist() == [[2, 0, 0, 0]]


@pytest.mark.parametrize("level", SPARSE_LEVELS)
def test_prune_is_idempotent(level: SparsityLevel) -> None:
    once = prune_magnitude(random_int8(16, 24, seed=5), level)
    twice = prune_magnitude(once, level)
    assert once.equals(twice)


@settings(deadline=None, max_examples=50)
@given(
    rows=st.integers(min_value=1, max_value=8),
    cols=st.integers(min_value=1, max_value=20),
    seed=st.integers(min_value=0, max_value=2**16),
    level=st.sampled_from(SPARSE_LEVELS),
)
def test_encode_decode_round_trip(rows: int, cols: int, seed: int, level: SparsityLevel) -> None:
    """decode(encode(A)) restores every conforming matrix, padded to whole groups."""
    pruned = prune_magnitude(random_int8(rows, cols, seed), level)
    c = encode(pruned, level)
    restored = decode(c)
    assert restored.cols == c.logical_cols
    assert np.array_equal(restored.data[:, :cols], pruned.data)
    assert not restored.data[:, cols:].any()
    assert encode(restored, level).equals(c)


@settings(deadline=None, max_examples=30)
@given(
    seed=st.integers(min_value=0, max_value=2**16),
    level=st.sampled_from(SPARSE_LEVELS),
)
def test_pruning_dominates_any_conforming_mask(seed: int, level: SparsityLevel) -> None:
    """Per group, the kept magnitude sum is never below another valid choice."""
    m = random_int8(4, 12, seed)
    pruned = prune_magnitude(m, level)
    gs, nz = level.group_size, level.nonzeros_per_group
    original = np.abs(m.data.astype(np.int64)).reshape(4, -1, gs)
    kept = np.abs(pruned.data.astype(np.int64)).reshape(4, -1, gs).sum(axis=2)
    best = np.sort(original, axis=2)[:, :, gs - nz :].sum(axis=2)
    assert np.array_equal(kept, best)


def test_bfloat16_round_trip() -> None:
    """bfloat16 matrices encode and decode bit-exactly."""
    m = prune_magnitude(random_bf16(4, 16, seed=2), SparsityLevel.S1OF4)
    restored = decode(encode(m, SparsityLevel.S1OF4))
    assert np.array_equal(restored.data.view(np.uint32), m.data.view(np.uint32))

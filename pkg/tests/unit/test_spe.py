"""Unit tests for the sparse processing element."""

from typing import AbstractSet, List, Sequence, Set, Tuple

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sstsim.errors import ArityMismatch, IndexOutOfGroup
from sstsim.sparse_format import Precision, SparsityLevel, decode, encode, prune_magnitude
from sstsim.spe import (
    Scalar,
    SpeInput,
    SpeState,
    a_pipeline_depth,
    spe_mac_reference,
    spe_step,
)
from sstsim.sst_slice import a_lane_stream, b_lane_stream
from tests.fixtures import random_bf16, random_int8

pytestmark = pytest.mark.unit


def stream_inputs(
    level: SparsityLevel, a_row: Sequence, b_col: Sequence
) -> List[SpeInput]:
    """One reduction for a single SPE followed by a flush word."""
    inputs = [
        SpeInput(op.value, op.index, lane, accumulate=j > 0, valid=True)
        for j, (op, lane) in enumerate(zip(a_row, b_col))
    ]
    idle = tuple(b_col[0]) if b_col else (0,) * level.b_lanes
    zero_lane = tuple(type(v)(0) for v in idle)
    inputs.append(SpeInput(0, 0, zero_lane, accumulate=False, valid=False))
    return inputs


def drive(
    level: SparsityLevel,
    precision: Precision,
    inputs: List[SpeInput],
    stalls: AbstractSet[int] = frozenset(),
) -> Tuple[List[Scalar], SpeState]:
    """Clock an SPE through ``inputs`` (holding them on stall cycles)."""
    state = SpeState.initial(level, precision)
    idle = SpeInput(0, 0, inputs[-1].b_values, accumulate=True, valid=False)
    results: List[Scalar] = []
    position = 0
    cycle = 0
    while position < len(inputs) + a_pipeline_depth(level) + 1:
        inp = inputs[position] if position < len(inputs) else idle
        if cycle in stalls:
            state, out = spe_step(
                state,
                SpeInput(inp.a_value, inp.a_index, inp.b_values, inp.accumulate, False, inp.valid),
            )
            assert out is None
        else:
            state, out = spe_step(state, inp)
            assert out is not None
            if out.result is not None:
                results.append(out.result)
            position += 1
        cycle += 1
    return results, state


def single_spe_case(
    level: SparsityLevel, precision: Precision, k: int, seed: int
) -> Tuple[List[SpeInput], Scalar]:
    """Inputs for one output of A row 0 times B column 0, and the oracle."""
    a = random_int8(1, k, seed) if precision is Precision.INT8 else random_bf16(1, k, seed)
    b = random_int8(k, 1, seed + 1) if precision is Precision.INT8 else random_bf16(k, 1, seed + 1)
    if level.is_sparse:
        tile = encode(prune_magnitude(a, level), level)
        dense_a = decode(tile).data[0]
        b = b.padded(tile.logical_cols, 1)
        elements = tile.stored_per_row
    else:
        tile = a
        dense_a = a.data[0]
        elements = k
    a_row = a_lane_stream(tile, 0)
    b_col = b_lane_stream(b, 0, level, elements)
    if level.is_sparse:
        gs, nz = level.group_size, level.nonzeros_per_group
        picked_a = [op.value for op in a_row]
        picked_b = [
            b.data[(j // nz) * gs + op.index, 0] for j, op in enumerate(a_row)
        ]
        expected = spe_mac_reference(picked_a, picked_b, precision)
    else:
        expected = spe_mac_reference(list(dense_a), list(b.data[:, 0]), precision)
    return stream_inputs(level, a_row, b_col), expected


@pytest.mark.parametrize("level", list(SparsityLevel))
@pytest.mark.parametrize("precision", list(Precision))
def test_single_reduction_matches_reference(
    level: SparsityLevel, precision: Precision
) -> None:
    """One SPE produces exactly the stream-order dot product."""
    inputs, expected = single_spe_case(level, precision, k=24, seed=7)
    results, state = drive(level, precision, inputs)
    assert len(results) == 1
    if precision is Precision.INT8:
        assert results[0] == expected
    else:
        assert np.float32(results[0]).view(np.uint32) == np.float32(expected).view(np.uint32)
    assert state.macs == len(inputs) - 1
    assert not state.accumulate_latch


def test_int8_accumulates_exactly() -> None:
    """Large int8 reductions never wrap."""
    k = 1024
    a_row = [SpeInput(-128, 0, (-128,), accumulate=j > 0) for j in range(k)]
    inputs = a_row + [SpeInput(0, 0, (0,), accumulate=False, valid=False)]
    results, _ = drive(SparsityLevel.DENSE, Precision.INT8, inputs)
    assert results == [k * 128 * 128]


def test_flush_keeps_accumulator_for_chaining() -> None:
    """A flush releases the result but leaves the accumulator in place."""
    inputs = [
        SpeInput(2, 0, (3,), accumulate=False),
        SpeInput(0, 0, (0,), accumulate=False, valid=False),
    ]
    results, state = drive(SparsityLevel.DENSE, Precision.INT8, inputs)
    assert results == [6]
    assert state.accumulator == 6
    assert not state.accumulate_latch


def test_new_tile_releases_previous_result() -> None:
    """accumulate=false on a valid word emits the old sum and restarts."""
    inputs = [
        SpeInput(1, 0, (5,), accumulate=False),
        SpeInput(1, 0, (5,), accumulate=True),
        SpeInput(2, 0, (2,), accumulate=False),
        SpeInput(0, 0, (0,), accumulate=False, valid=False),
    ]
    results, _ = drive(SparsityLevel.DENSE, Precision.INT8, inputs)
    assert results == [10, 4]


def test_index_selects_group_member() -> None:
    """In 1:4 mode the index picks one of the four B values."""
    inputs = [
        SpeInput(3, 2, (10, 20, 30, 40), accumulate=False),
        SpeInput(0, 0, (0, 0, 0, 0), accumulate=False, valid=False),
    ]
    results, _ = drive(SparsityLevel.S1OF4, Precision.INT8, inputs)
    assert results == [90]


def test_arity_mismatch_is_rejected_even_when_disabled() -> None:
    state = SpeState.initial(SparsityLevel.S1OF3, Precision.INT8)
    with pytest.raises(ArityMismatch):
        spe_step(state, SpeInput(1, 0, (1, 2, 3, 4)))
    with pytest.raises(ArityMismatch):
        spe_step(state, SpeInput(1, 0, (1, 2), enable=False))


def test_index_outside_group_is_rejected() -> None:
    state = SpeState.initial(SparsityLevel.S1OF3, Precision.INT8)
    state, _ = spe_step(state, SpeInput(1, 3, (1, 2, 3)))
    with pytest.raises(IndexOutOfGroup):
        spe_step(state, SpeInput(0, 0, (0, 0, 0), valid=False))


def test_disabled_cycle_freezes_state() -> None:
    state = SpeState.initial(SparsityLevel.DENSE, Precision.INT8)
    state, _ = spe_step(state, SpeInput(4, 0, (4,), accumulate=False))
    frozen, out = spe_step(state, SpeInput(9, 0, (9,), enable=False))
    assert out is None
    assert frozen == state


def test_pipeline_depth_per_mode() -> None:
    assert a_pipeline_depth(SparsityLevel.S2OF4) == 2
    for level in (SparsityLevel.DENSE, SparsityLevel.S1OF3, SparsityLevel.S1OF4):
        assert a_pipeline_depth(level) == 1


def test_reference_rejects_unequal_streams() -> None:
    with pytest.raises(ValueError):
        spe_mac_reference([1, 2], [1], Precision.INT8)


@settings(deadline=None, max_examples=40)
@given(
    level=st.sampled_from(list(SparsityLevel)),
    precision=st.sampled_from(list(Precision)),
    seed=st.integers(min_value=0, max_value=10_000),
    stalls=st.sets(st.integers(min_value=0, max_value=40), max_size=10),
)
def test_stalls_do_not_change_results(
    level: SparsityLevel, precision: Precision, seed: int, stalls: Set[int]
) -> None:
    """Inserting disabled cycles anywhere leaves the result unchanged."""
    inputs, expected = single_spe_case(level, precision, k=12, seed=seed)
    plain, _ = drive(level, precision, inputs)
    stalled, _ = drive(level, precision, inputs, stalls)
    assert len(plain) == len(stalled) == 1
    if precision is Precision.INT8:
        assert plain == stalled == [expected]
    else:
        bits = [np.float32(v).view(np.uint32) for v in (plain[0], stalled[0], expected)]
        assert bits[0] == bits[1] == bits[2]

"""Cycle-level model of one Sparse Processing Element (SPE).

An SPE is a single MAC with operand forwarding registers. Matrix A enters
from the left as (value, index) pairs, matrix B from the top as a lane of
1, 3 or 4 values. The index picks the B value that matches the stored A
non-zero.

Register timing per enabled cycle:
  * A advances one stage through ``a_pipeline``; the MAC consumes the last
    stage and the first stage is forwarded to the right neighbour.
  * B is forwarded down from ``b_forward``. In 2:4 mode the operand
    registers ``b_registers`` reload from ``b_forward`` every second cycle
    and hold one group for both of its A values, which is why A needs a
    second stage in that mode.
"""

from dataclasses import dataclass
from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ArityMismatch, IndexOutOfGroup
from .sparse_format import Precision, SparsityLevel

Scalar = Union[int, np.float32]

MAX_INT8_REDUCTION = 2**17


@dataclass(frozen=True, slots=True)
class Operand:
    """One A word in flight: value, group position and control bits."""

    value: Scalar = 0
    index: int = 0
    accumulate: bool = True
    valid: bool = False


BUBBLE = Operand()


@dataclass(frozen=True, slots=True)
class SpeInput:
    """Per-cycle inputs of an SPE."""

    a_value: Scalar
    a_index: int
    b_values: Tuple[Scalar, ...]
    accumulate: bool = True
    enable: bool = True
    valid: bool = True

    @property
    def operand(self) -> Operand:
        return Operand(self.a_value, self.a_index, self.accumulate, self.valid)


@dataclass(frozen=True, slots=True)
class SpeOutput:
    """Values leaving an SPE in one enabled cycle."""

    right: Operand
    down: Tuple[Scalar, ...]
    result: Optional[Scalar] = None


@dataclass(frozen=True, slots=True)
class SpeState:
    """Architectural state of one SPE.

    ``accumulate_latch`` is set while the accumulator holds an unfinished
    output; the next operand arriving with ``accumulate`` deasserted (or a
    flush bubble) releases it as a result.
    """

    mode: SparsityLevel
    precision: Precision
    accumulator: Scalar
    a_pipeline: Tuple[Operand, ...]
    b_forward: Tuple[Scalar, ...]
    b_registers: Tuple[Scalar, ...]
    phase: int = 0
    accumulate_latch: bool = False
    macs: int = 0

    @classmethod
    def initial(cls, mode: SparsityLevel, precision: Precision) -> "SpeState":
        zero = zero_value(precision)
        lanes = (zero,) * mode.b_lanes
        return cls(
            mode=mode,
            precision=precision,
            accumulator=zero_accumulator(precision),
            a_pipeline=(BUBBLE,) * a_pipeline_depth(mode),
            b_forward=lanes,
            b_registers=lanes,
        )

    @property
    def right(self) -> Operand:
        """Operand currently offered to the right neighbour."""
        return self.a_pipeline[0]

    @property
    def down(self) -> Tuple[Scalar, ...]:
        """B lane currently offered to the neighbour below."""
        return self.b_forward


def a_pipeline_depth(mode: SparsityLevel) -> int:
    """A register stages inside the SPE for a mode."""
    return 2 if mode is SparsityLevel.S2OF4 else 1


def zero_value(precision: Precision) -> Scalar:
    return 0 if precision is Precision.INT8 else np.float32(0.0)


def zero_accumulator(precision: Precision) -> Scalar:
    return 0 if precision is Precision.INT8 else np.float32(0.0)


def multiply(a: Scalar, b: Scalar, precision: Precision) -> Scalar:
    """Exact product in the accumulator domain."""
    if precision is Precision.INT8:
        return int(a) * int(b)
    return np.float32(a) * np.float32(b)


def accumulate(acc: Scalar, product: Scalar, precision: Precision) -> Scalar:
    """One accumulator update: int32 add or fp32 add with round to nearest even."""
    if precision is Precision.INT8:
        return int(acc) + int(product)
    return np.float32(acc) + np.float32(product)


def _select_b(op: Operand, b: Tuple[Scalar, ...], mode: SparsityLevel) -> Scalar:
    if not mode.is_sparse:
        return b[0]
    if op.index >= mode.group_size:
        raise IndexOutOfGroup(
            f"SPE index {op.index} is outside a {mode.value} group"
        )
    return b[op.index]


def spe_step(state: SpeState, inp: SpeInput) -> Tuple[SpeState, Optional[SpeOutput]]:
    """
    Advance one SPE by one clock.

    Args:
        state: Current SPE state
        inp: Operands and control arriving this cycle

    Returns:
        Tuple of the next state and the cycle's outputs (``None`` when
        disabled)

    Raises:
        ArityMismatch: If the B lane width disagrees with the mode
    """
    mode = state.mode
    if len(inp.b_values) != mode.b_lanes:
        raise ArityMismatch(
            f"{mode.value} mode expects {mode.b_lanes} B values, "
            f"got {len(inp.b_values)}"
        )
    if not inp.enable:
        return state, None

    precision = state.precision
    op = state.a_pipeline[-1]
    acc = state.accumulator
    latch = state.accumulate_latch
    macs = state.macs
    result: Optional[Scalar] = None

    if op.valid:
        product = multiply(op.value, _select_b(op, state.b_registers, mode), precision)
        if not op.accumulate:
            if latch:
                result = acc
            acc = product
        else:
            acc = accumulate(acc, product, precision)
        latch = True
        macs += 1
    elif not op.accumulate and latch:
        result = acc
        latch = False

    if mode is SparsityLevel.S2OF4:
        newest, previous = state.a_pipeline[0], state.a_pipeline[1]
        starts_group_run = newest.valid and (
            not newest.accumulate or not previous.valid
        )
        phase = 0 if starts_group_run else state.phase
        b_registers = state.b_forward if phase == 0 else state.b_registers
        next_phase = (phase + 1) % 2
    else:
        b_registers = tuple(inp.b_values)
        next_phase = 0

    next_state = SpeState(
        mode=mode,
        precision=precision,
        accumulator=acc,
        a_pipeline=(inp.operand,) + state.a_pipeline[:-1],
        b_forward=tuple(inp.b_values),
        b_registers=b_registers,
        phase=next_phase,
        accumulate_latch=latch,
        macs=macs,
    )
    return next_state, SpeOutput(state.right, state.down, result)


def spe_mac_reference(
    a_stream: Sequence[Any], b_stream: Sequence[Any], precision: Precision
) -> Scalar:
    """
    Stream-order dot product used as the SPE oracle.

    int8 sums exactly. bfloat16 forms each product exactly in fp32 and
    accumulates in fp32, starting from the first product.
    """
    if len(a_stream) != len(b_stream):
        raise ValueError(
            f"Streams differ in length: {len(a_stream)} vs {len(b_stream)}"
        )
    if precision is Precision.INT8:
        return sum(int(a) * int(b) for a, b in zip(a_stream, b_stream))
    acc: Optional[Scalar] = None
    for a, b in zip(a_stream, b_stream):
        product = multiply(a, b, precision)
        acc = product if acc is None else accumulate(acc, product, precision)
    return np.float32(0.0) if acc is None else acc

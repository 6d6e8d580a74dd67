"""Cycle-level model of one SST slice.

A slice is a 4×4 output-stationary grid of SPEs with triangular setup
delays on its A and B inputs, a delay line that distributes the accumulate
flag, and a six-entry buffer that turns the diagonal completion order of
the SPEs into column-wise output (one column of four results per cycle).
"""

from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from .errors import ArityMismatch, DimensionError, ExtractOverflow, ModeChangeError
from .sparse_format import CompressedMatrix, DenseMatrix, Precision, SparsityLevel
from .spe import (
    BUBBLE,
    MAX_INT8_REDUCTION,
    Operand,
    Scalar,
    SpeInput,
    SpeState,
    spe_step,
    zero_value,
)
from .trace import TraceEvent, TraceRecorder

SIZE = 4
EXTRACT_SLOTS = 6
MIN_TILE_CYCLES = SIZE

BLane = Tuple[Scalar, ...]
ATile = Union[CompressedMatrix, DenseMatrix]


@dataclass(frozen=True)
class SliceConfig:
    """Static (bitstream-time) options of a slice."""

    systolic_setup_a: bool = True
    systolic_setup_b: bool = True
    precision: Precision = Precision.INT8


@dataclass(frozen=True)
class SliceInputs:
    """Everything driven into a slice during one cycle."""

    a_rows: Tuple[Operand, ...]
    b_cols: Tuple[BLane, ...]
    sparsity_level: SparsityLevel
    d_type: Precision
    accumulate: bool = True
    enable: bool = True


@dataclass(frozen=True)
class SliceOutputs:
    """Everything a slice drives out during one cycle."""

    a_out: Tuple[Operand, ...]
    b_ded_out: Tuple[BLane, ...]
    accumulate_out: bool
    c_data: Optional[Tuple[Scalar, ...]] = None
    valid_out: bool = False
    column: Optional[int] = None


BufferEntry = Tuple[int, int, Scalar]


@dataclass(frozen=True)
class SliceState:
    """Full architectural state of one slice."""

    config: SliceConfig
    mode: SparsityLevel
    precision: Precision
    spes: Tuple[Tuple[SpeState, ...], ...]
    setup_a: Tuple[Tuple[Operand, ...], ...]
    setup_b: Tuple[Tuple[BLane, ...], ...]
    flag_line: Tuple[bool, ...] = (True,) * SIZE
    extract_buffer: Tuple[Optional[BufferEntry], ...] = (None,) * EXTRACT_SLOTS
    extract_cursor: int = 0
    cycle: int = 0
    slice_id: str = "0,0"

    @property
    def a_out(self) -> Tuple[Operand, ...]:
        return tuple(self.spes[r][SIZE - 1].right for r in range(SIZE))

    @property
    def b_ded_out(self) -> Tuple[BLane, ...]:
        return tuple(self.spes[SIZE - 1][c].down for c in range(SIZE))

    @property
    def accumulate_out(self) -> bool:
        """Accumulate flag delayed by one slice worth of operand skew."""
        return self.flag_line[-1]

    @property
    def buffer_occupancy(self) -> int:
        return sum(entry is not None for entry in self.extract_buffer)

    def is_idle(self) -> bool:
        """True when no operand or partial result is held anywhere."""
        for row in self.spes:
            for spe in row:
                if spe.accumulate_latch or any(op.valid for op in spe.a_pipeline):
                    return False
        if any(op.valid for line in self.setup_a for op in line):
            return False
        return self.buffer_occupancy == 0

    def total_macs(self) -> int:
        return sum(spe.macs for row in self.spes for spe in row)


def bubble_lane(mode: SparsityLevel, precision: Precision) -> BLane:
    return (zero_value(precision),) * mode.b_lanes


def initial_slice_state(
    config: SliceConfig,
    mode: SparsityLevel = SparsityLevel.DENSE,
    slice_id: str = "0,0",
) -> SliceState:
    """Reset state of a slice configured for ``mode``."""
    precision = config.precision
    lane = bubble_lane(mode, precision)
    return SliceState(
        config=config,
        mode=mode,
        precision=precision,
        spes=tuple(
            tuple(SpeState.initial(mode, precision) for _ in range(SIZE))
            for _ in range(SIZE)
        ),
        setup_a=tuple(
            (BUBBLE,) * (r if config.systolic_setup_a else 0) for r in range(SIZE)
        ),
        setup_b=tuple(
            (lane,) * (c if config.systolic_setup_b else 0) for c in range(SIZE)
        ),
        slice_id=slice_id,
    )


def _reconfigure(state: SliceState, inputs: SliceInputs) -> SliceState:
    if not state.is_idle():
        raise ModeChangeError(
            f"Slice {state.slice_id}: mode change to "
            f"{inputs.sparsity_level.value}/{inputs.d_type.value} while a tile "
            "is in flight"
        )
    config = SliceConfig(
        state.config.systolic_setup_a, state.config.systolic_setup_b, inputs.d_type
    )
    fresh = initial_slice_state(config, inputs.sparsity_level, state.slice_id)
    return SliceState(
        config=config,
        mode=fresh.mode,
        precision=fresh.precision,
        spes=fresh.spes,
        setup_a=fresh.setup_a,
        setup_b=fresh.setup_b,
        flag_line=state.flag_line,
        extract_cursor=state.extract_cursor,
        cycle=state.cycle,
        slice_id=state.slice_id,
    )


def _delay(line: Tuple[Any, ...], value: Any) -> Tuple[Any, Tuple[Any, ...]]:
    """Shift ``value`` into a delay line and return (output, new line)."""
    if not line:
        return value, line
    return line[-1], (value,) + line[:-1]


def _extract(
    state: SliceState, results: List[BufferEntry]
) -> Tuple[Tuple[Optional[BufferEntry], ...], int, Optional[Tuple[Scalar, ...]], int]:
    """Move finished SPE results through the extraction buffer."""
    slots = list(state.extract_buffer)
    cursor = state.extract_cursor
    bottom = [entry for entry in results if entry[0] == SIZE - 1]
    c_data: Optional[Tuple[Scalar, ...]] = None
    column = -1

    if len(bottom) > 1:
        raise ExtractOverflow(
            f"Slice {state.slice_id}: {len(bottom)} columns complete in one cycle"
        )
    if bottom:
        column = bottom[0][1]
        if column != cursor:
            raise ExtractOverflow(
                f"Slice {state.slice_id}: column {column} completed while "
                f"column {cursor} was due"
            )
        values: List[Scalar] = []
        for row in range(SIZE - 1):
            slot = next(
                (
                    i
                    for i, entry in enumerate(slots)
                    if entry is not None and entry[0] == row and entry[1] == column
                ),
                None,
            )
            held = None if slot is None else slots[slot]
            if slot is None or held is None:
                raise ExtractOverflow(
                    f"Slice {state.slice_id}: result ({row},{column}) missing "
                    "from the extraction buffer"
                )
            values.append(held[2])
            slots[slot] = None
        values.append(bottom[0][2])
        c_data = tuple(values)
        cursor = (cursor + 1) % SIZE

    for entry in results:
        if entry[0] == SIZE - 1:
            continue
        free = next((i for i, slot in enumerate(slots) if slot is None), None)
        if free is None:
            raise ExtractOverflow(
                f"Slice {state.slice_id}: extraction buffer full at cycle "
                f"{state.cycle}"
            )
        slots[free] = entry
    return tuple(slots), cursor, c_data, column


def slice_step(
    state: SliceState,
    inputs: SliceInputs,
    trace: Optional[TraceRecorder] = None,
) -> Tuple[SliceState, SliceOutputs]:
    """
    Advance a slice by one clock.

    Outputs on ``a_out``, ``b_ded_out`` and ``accumulate_out`` are register
    contents from before the clock edge, so neighbours see them one cycle
    after they entered this slice's last SPE.

    Raises:
        ArityMismatch: If a lane count or B lane width is wrong
        ModeChangeError: If mode or precision changes mid-tile
        ExtractOverflow: If the extraction schedule is violated
    """
    if len(inputs.a_rows) != SIZE or len(inputs.b_cols) != SIZE:
        raise ArityMismatch(
            f"Slice expects {SIZE} A rows and {SIZE} B columns, got "
            f"{len(inputs.a_rows)} and {len(inputs.b_cols)}"
        )
    if inputs.sparsity_level is not state.mode or inputs.d_type is not state.precision:
        state = _reconfigure(state, inputs)
    for lane in inputs.b_cols:
        if len(lane) != state.mode.b_lanes:
            raise ArityMismatch(
                f"{state.mode.value} mode expects {state.mode.b_lanes} values "
                f"per B lane, got {len(lane)}"
            )

    ports = SliceOutputs(state.a_out, state.b_ded_out, state.accumulate_out)
    if not inputs.enable:
        if trace is not None:
            trace.record(state.cycle, state.slice_id, "", TraceEvent.STALL)
        return _advance_cycle(state), ports

    # accumulate flag for row r is the input delayed r cycles
    flags = (inputs.accumulate,) + state.flag_line[: SIZE - 1]
    flag_line = (inputs.accumulate,) + state.flag_line[: SIZE - 1]

    row_inputs: List[Operand] = []
    setup_a: List[Tuple[Operand, ...]] = []
    for r in range(SIZE):
        lane, line = _delay(state.setup_a[r], inputs.a_rows[r])
        setup_a.append(line)
        row_inputs.append(Operand(lane.value, lane.index, flags[r], lane.valid))

    col_inputs: List[BLane] = []
    setup_b: List[Tuple[BLane, ...]] = []
    for c in range(SIZE):
        lane_b, line_b = _delay(state.setup_b[c], tuple(inputs.b_cols[c]))
        setup_b.append(line_b)
        col_inputs.append(lane_b)

    grid = state.spes
    next_grid: List[Tuple[SpeState, ...]] = []
    results: List[BufferEntry] = []
    for r in range(SIZE):
        next_row: List[SpeState] = []
        for c in range(SIZE):
            a = row_inputs[r] if c == 0 else grid[r][c - 1].right
            b = col_inputs[c] if r == 0 else grid[r - 1][c].down
            spe = grid[r][c]
            stepped, out = spe_step(
                spe, SpeInput(a.value, a.index, b, a.accumulate, True, a.valid)
            )
            next_row.append(stepped)
            if out is not None and out.result is not None:
                results.append((r, c, out.result))
            if trace is not None:
                spe_id = f"{r}{c}"
                if stepped.macs != spe.macs:
                    trace.record(state.cycle, state.slice_id, spe_id, TraceEvent.MAC)
                if out is not None and out.result is not None:
                    trace.record(
                        state.cycle, state.slice_id, spe_id, TraceEvent.RESULT,
                        out.result,
                    )
        next_grid.append(tuple(next_row))

    slots, cursor, c_data, column = _extract(state, results)
    next_state = SliceState(
        config=state.config,
        mode=state.mode,
        precision=state.precision,
        spes=tuple(next_grid),
        setup_a=tuple(setup_a),
        setup_b=tuple(setup_b),
        flag_line=flag_line,
        extract_buffer=slots,
        extract_cursor=cursor,
        cycle=state.cycle + 1,
        slice_id=state.slice_id,
    )
    if trace is not None:
        if c_data is not None:
            trace.record(state.cycle, state.slice_id, "", TraceEvent.EXTRACT, column)
        trace.record(
            state.cycle, state.slice_id, "", TraceEvent.BUFFER,
            next_state.buffer_occupancy,
        )
    outputs = SliceOutputs(
        a_out=ports.a_out,
        b_ded_out=ports.b_ded_out,
        accumulate_out=ports.accumulate_out,
        c_data=c_data,
        valid_out=c_data is not None,
        column=column if c_data is not None else None,
    )
    return next_state, outputs


def _advance_cycle(state: SliceState) -> SliceState:
    return SliceState(
        config=state.config,
        mode=state.mode,
        precision=state.precision,
        spes=state.spes,
        setup_a=state.setup_a,
        setup_b=state.setup_b,
        flag_line=state.flag_line,
        extract_buffer=state.extract_buffer,
        extract_cursor=state.extract_cursor,
        cycle=state.cycle + 1,
        slice_id=state.slice_id,
    )


# Operand streams shared by the slice driver and the fabric controller.


def tile_level(a: ATile) -> SparsityLevel:
    return a.level if isinstance(a, CompressedMatrix) else SparsityLevel.DENSE


def stream_length(a: ATile) -> int:
    """Cycles one A row needs to stream its (compressed) reduction dimension."""
    if isinstance(a, CompressedMatrix):
        return a.stored_per_row
    return a.cols


def tile_cycles(stream: int) -> int:
    """Issue spacing of back-to-back output tiles."""
    return max(stream, MIN_TILE_CYCLES)


def reduction_length(a: ATile) -> int:
    return a.logical_cols if isinstance(a, CompressedMatrix) else a.cols


def _scalar(value: Any, precision: Precision) -> Scalar:
    return int(value) if precision is Precision.INT8 else np.float32(value)


def a_lane_stream(a: ATile, row: int) -> List[Operand]:
    """Stream of A words for one matrix row, in reduction order."""
    if isinstance(a, CompressedMatrix):
        return [
            Operand(_scalar(v, a.precision), int(i), True, True)
            for v, i in zip(a.values[row], a.indices[row])
        ]
    return [Operand(_scalar(v, a.precision), 0, True, True) for v in a.data[row]]


def b_lane_stream(
    b: DenseMatrix, col: int, level: SparsityLevel, elements: int
) -> List[BLane]:
    """
    B lane contents for each A stream element of one output column.

    In 2:4 mode both A values of a group see the same four B values, which
    models the B registers holding a group for two cycles.
    """
    gs, nz = level.group_size, level.nonzeros_per_group
    column = [_scalar(v, b.precision) for v in b.data[:, col]]
    lanes: List[BLane] = []
    for j in range(elements):
        start = (j // nz) * gs
        lanes.append(tuple(column[start : start + gs]))
    return lanes


def pad_b_rows(a: ATile, b: DenseMatrix) -> DenseMatrix:
    """Zero-extend B over the columns the encoder appended to A's last group."""
    k = reduction_length(a)
    if isinstance(a, CompressedMatrix) and a.cols == b.rows < k:
        return b.padded(k, b.cols)
    return b


def check_reduction(a: ATile, b: DenseMatrix) -> None:
    """Raise DimensionError unless A and B agree on a non-empty reduction."""
    k = reduction_length(a)
    if k == 0:
        raise DimensionError("A has no reduction columns (K=0)")
    if b.rows != k:
        raise DimensionError(
            f"B has {b.rows} rows but A reduces over {k} logical columns"
        )
    if a.precision is not b.precision:
        raise DimensionError(
            f"A is {a.precision.value} but B is {b.precision.value}"
        )
    if a.precision is Precision.INT8 and k > MAX_INT8_REDUCTION:
        raise DimensionError(
            f"K={k} exceeds {MAX_INT8_REDUCTION}, the int32 accumulator bound"
        )


@dataclass
class SliceRunResult:
    """Output of driving a sequence of tiles through one slice."""

    blocks: List[npt.NDArray[Any]]
    steady_state_cycles_per_tile: int
    total_cycles: int
    state: SliceState
    valid_cycles: List[int] = field(default_factory=list)

    @property
    def block(self) -> npt.NDArray[Any]:
        return self.blocks[0]


def slice_run_tiles(
    state: SliceState,
    tiles: Sequence[Tuple[ATile, DenseMatrix]],
    accumulate_chain: bool = False,
    trace: Optional[TraceRecorder] = None,
    stall_cycles: Sequence[int] = (),
) -> SliceRunResult:
    """
    Stream back-to-back 4×K by K×4 tiles through a slice.

    Every tile starts a new output (accumulate deasserted on its first
    word) except the first one when ``accumulate_chain`` is set, which adds
    onto the accumulators left by a previous run. A flush word follows the
    last tile so every result reaches the extraction buffer.

    When setup delays are disabled the driver skews the lanes itself.
    """
    if not tiles:
        raise ValueError("No tiles to run")
    level = tile_level(tiles[0][0])
    precision = tiles[0][0].precision
    streams = []
    for a, b in tiles:
        if a.rows != SIZE or b.cols != SIZE:
            raise DimensionError(f"Slice tiles must be {SIZE}×K and K×{SIZE}")
        if tile_level(a) is not level:
            raise ModeChangeError("All tiles of one run must share a sparsity level")
        b = pad_b_rows(a, b)
        check_reduction(a, b)
        length = stream_length(a)
        streams.append(
            (
                [a_lane_stream(a, r) for r in range(SIZE)],
                [b_lane_stream(b, c, level, length) for c in range(SIZE)],
                length,
            )
        )
    spacing = tile_cycles(max(s[2] for s in streams))
    flush_position = spacing * len(tiles)
    idle_b = bubble_lane(level, precision)

    def word(position: int, r: int) -> Operand:
        if position < 0 or position >= flush_position:
            return BUBBLE
        a_rows, _, length = streams[position // spacing]
        offset = position % spacing
        return a_rows[r][offset] if offset < length else BUBBLE

    def lane(position: int, c: int) -> BLane:
        if position < 0 or position >= flush_position:
            return idle_b
        _, b_cols, length = streams[position // spacing]
        offset = position % spacing
        return b_cols[c][offset] if offset < length else idle_b

    def flag(position: int) -> bool:
        if position == flush_position:
            return False
        if 0 <= position < flush_position and position % spacing == 0:
            return position == 0 and accumulate_chain
        return True

    skew_a = not state.config.systolic_setup_a
    skew_b = not state.config.systolic_setup_b
    stalls = set(stall_cycles)
    expected_columns = SIZE * len(tiles)
    columns: List[Tuple[Scalar, ...]] = []
    valid_cycles: List[int] = []
    position = 0
    cycle = 0
    # fill + drain of one slice is bounded well below this
    limit = flush_position + len(stalls) + 8 * SIZE
    while len(columns) < expected_columns:
        if cycle > limit:
            raise RuntimeError("Slice run did not drain")
        enable = cycle not in stalls
        inputs = SliceInputs(
            a_rows=tuple(
                word(position - (r if skew_a else 0), r) for r in range(SIZE)
            ),
            b_cols=tuple(
                lane(position - (c if skew_b else 0), c) for c in range(SIZE)
            ),
            sparsity_level=level,
            d_type=precision,
            accumulate=flag(position),
            enable=enable,
        )
        state, outputs = slice_step(state, inputs, trace)
        if outputs.c_data is not None:
            columns.append(outputs.c_data)
            valid_cycles.append(cycle)
        if enable:
            position += 1
        cycle += 1

    dtype = np.int32 if precision is Precision.INT8 else np.float32
    blocks = []
    for t in range(len(tiles)):
        block = np.zeros((SIZE, SIZE), dtype=dtype)
        for c in range(SIZE):
            block[:, c] = columns[t * SIZE + c]
        blocks.append(block)
    return SliceRunResult(blocks, spacing, cycle, state, valid_cycles)


def slice_run_tile(
    state: SliceState,
    a_tile: ATile,
    b_tile: DenseMatrix,
    accumulate_chain: bool = False,
    trace: Optional[TraceRecorder] = None,
) -> SliceRunResult:
    """Run a single 4×K by K×4 tile; see ``slice_run_tiles``."""
    return slice_run_tiles(state, [(a_tile, b_tile)], accumulate_chain, trace)

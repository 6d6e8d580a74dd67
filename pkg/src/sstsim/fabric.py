"""Y×X grid of SST slices computing tiled GEMMs.

Matrix A is streamed from Y row banks into the left column of slices and
passes right through each slice row. Matrix B is streamed from X column
bank groups into the top row and travels down dedicated wires. Each output
block of (4Y)×(4X) stays in the SPEs while the whole reduction dimension
streams through; blocks are visited N-outer, M-inner.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import numpy.typing as npt
import pandas as pd

from .errors import BandwidthInfeasible, CapabilityError, DimensionError
from .sparse_format import (
    CompressedMatrix,
    DenseMatrix,
    INDEX_BITS,
    Precision,
    SparsityLevel,
    decode,
    encode,
)
from .spe import BUBBLE, Operand, a_pipeline_depth
from .sst_slice import (
    SIZE,
    ATile,
    BLane,
    SliceConfig,
    SliceInputs,
    SliceState,
    a_lane_stream,
    b_lane_stream,
    bubble_lane,
    check_reduction,
    initial_slice_state,
    pad_b_rows,
    slice_step,
    stream_length,
    tile_cycles,
    tile_level,
)
from .trace import TraceRecorder

logger = logging.getLogger(__name__)

BRAM_WIDTH_BITS = 40
BRAM_DEPTH = 512
C_BANK_WIDTH_BITS = 4 * 32
B_BANKS_PER_CHAIN = 4


class Capability(Enum):
    """Which sparsity levels a fabric can execute."""

    DENSE_ONLY = "dense_only"
    DYNAMIC_SPARSE = "dynamic_sparse"


@dataclass(frozen=True)
class FabricConfig:
    """Geometry and options of a GEMM fabric.

    ``matched_b_capacity`` gives a dense-only fabric the same four B banks
    per chain as the sparse design, so both carry equal on-chip memory.
    """

    Y: int = 1
    X: int = 1
    precision: Precision = Precision.INT8
    mode_capability: Capability = Capability.DYNAMIC_SPARSE
    bank_depth: int = BRAM_DEPTH
    frequency_hz: Optional[float] = None
    auto_pad: bool = True
    matched_b_capacity: bool = False

    def __post_init__(self) -> None:
        if self.Y < 1 or self.X < 1:
            raise ValueError(f"Fabric needs at least one slice, got {self.Y}×{self.X}")
        if self.bank_depth < 1:
            raise ValueError("bank_depth must be positive")

    @property
    def native_rows(self) -> int:
        return SIZE * self.Y

    @property
    def native_cols(self) -> int:
        return SIZE * self.X

    @property
    def sparse_capable(self) -> bool:
        return self.mode_capability is Capability.DYNAMIC_SPARSE

    def supports(self, level: SparsityLevel) -> bool:
        return self.sparse_capable or not level.is_sparse


def _round_up(value: int, multiple: int) -> int:
    return -(-value // multiple) * multiple


@dataclass(frozen=True)
class GemmProblem:
    """C = A × B with A optionally in compressed N:M form."""

    a: ATile
    b: DenseMatrix

    def __post_init__(self) -> None:
        if self.a.precision is not self.b.precision:
            raise DimensionError(
                f"A is {self.a.precision.value} but B is {self.b.precision.value}"
            )
        if self.b.rows not in (self.K, self.logical_k):
            raise DimensionError(
                f"A is {self.M}×{self.K} but B has {self.b.rows} rows"
            )

    @classmethod
    def from_dense(
        cls, a: DenseMatrix, b: DenseMatrix, level: SparsityLevel
    ) -> "GemmProblem":
        """Build a problem, compressing A when ``level`` is sparse."""
        return cls(encode(a, level) if level.is_sparse else a, b)

    @property
    def a_level(self) -> SparsityLevel:
        return tile_level(self.a)

    @property
    def precision(self) -> Precision:
        return self.a.precision

    @property
    def M(self) -> int:
        return self.a.rows

    @property
    def K(self) -> int:
        return self.a.cols

    @property
    def N(self) -> int:
        return self.b.cols

    @property
    def logical_k(self) -> int:
        if isinstance(self.a, CompressedMatrix):
            return self.a.logical_cols
        return self.a.cols

    def dense_a(self) -> DenseMatrix:
        """A with zeros materialized (``rows`` × ``logical_k``)."""
        return decode(self.a) if isinstance(self.a, CompressedMatrix) else self.a

    def materialized_dense(self) -> "GemmProblem":
        """The same product expressed for a dense-only fabric."""
        return GemmProblem(self.dense_a(), pad_b_rows(self.a, self.b))


@dataclass(frozen=True)
class Bank:
    name: str
    width_bits: int
    depth: int

    @property
    def brams(self) -> int:
        return -(-self.width_bits // BRAM_WIDTH_BITS) * -(-self.depth // BRAM_DEPTH)


@dataclass(frozen=True)
class BankLayout:
    """On-chip A, B and C banks of a fabric."""

    a_banks: Tuple[Bank, ...]
    b_banks: Tuple[Bank, ...]
    c_banks: Tuple[Bank, ...]
    depth: int

    def widths(self) -> Dict[str, int]:
        return {
            bank.name: bank.width_bits
            for bank in self.a_banks + self.b_banks + self.c_banks
        }


def bank_layout(cfg: FabricConfig) -> BankLayout:
    """Bank geometry for a fabric configuration."""
    value_bits = cfg.precision.value_bits
    a_width = SIZE * value_bits + (SIZE * INDEX_BITS if cfg.sparse_capable else 0)
    chains = B_BANKS_PER_CHAIN if cfg.sparse_capable or cfg.matched_b_capacity else 1
    depth = cfg.bank_depth
    return BankLayout(
        a_banks=tuple(Bank(f"A{y}", a_width, depth) for y in range(cfg.Y)),
        b_banks=tuple(
            Bank(f"B{x}.{k}", SIZE * value_bits, depth)
            for x in range(cfg.X)
            for k in range(chains)
        ),
        c_banks=tuple(
            Bank(f"C{y}.{x}", C_BANK_WIDTH_BITS, depth)
            for y in range(cfg.Y)
            for x in range(cfg.X)
        ),
        depth=depth,
    )


def count_brams(cfg: FabricConfig) -> Dict[str, int]:
    """BRAMs in the 512×40 mode needed by each bank group."""
    layout = bank_layout(cfg)
    counts = {
        "a": sum(bank.brams for bank in layout.a_banks),
        "b": sum(bank.brams for bank in layout.b_banks),
        "c": sum(bank.brams for bank in layout.c_banks),
    }
    counts["total"] = counts["a"] + counts["b"] + counts["c"]
    return counts


def _pad_compressed_rows(a: CompressedMatrix, rows: int) -> CompressedMatrix:
    if rows == a.rows:
        return a
    extra = rows - a.rows
    nz = a.level.nonzeros_per_group
    values = np.zeros((rows, a.stored_per_row), dtype=a.values.dtype)
    values[: a.rows] = a.values
    fill = np.tile(np.arange(nz, dtype=np.uint8), a.groups_per_row)
    indices = np.vstack([a.indices, np.tile(fill, (extra, 1))]).astype(np.uint8)
    return CompressedMatrix(
        a.level, a.precision, rows, a.logical_cols, values, indices, a.cols
    )


def pad_problem(cfg: FabricConfig, p: GemmProblem) -> GemmProblem:
    """
    Zero-pad M to a multiple of 4Y and N to a multiple of 4X.

    Raises:
        DimensionError: If padding is needed and ``cfg.auto_pad`` is off
    """
    m_hat = _round_up(max(p.M, 1), cfg.native_rows)
    n_hat = _round_up(max(p.N, 1), cfg.native_cols)
    b = pad_b_rows(p.a, p.b)
    if m_hat == p.M and n_hat == p.N and b is p.b:
        return p
    if (m_hat, n_hat) != (p.M, p.N):
        if not cfg.auto_pad:
            raise DimensionError(
                f"{p.M}×{p.N} output is not a multiple of the native "
                f"{cfg.native_rows}×{cfg.native_cols} size"
            )
        logger.warning(
            "Zero-padding %d×%d output to %d×%d for a %d×%d fabric",
            p.M, p.N, m_hat, n_hat, cfg.Y, cfg.X,
        )
    if isinstance(p.a, CompressedMatrix):
        a: ATile = _pad_compressed_rows(p.a, m_hat)
    else:
        a = p.a.padded(m_hat, p.a.cols)
    return GemmProblem(a, b.padded(b.rows, n_hat))


class _StreamController:
    """Bank read plan: which word each bank drives on every cycle."""

    def __init__(self, cfg: FabricConfig, p: GemmProblem):
        self.cfg = cfg
        self.level = p.a_level
        self.precision = p.precision
        self.length = stream_length(p.a)
        self.spacing = tile_cycles(self.length)
        m_blocks = p.M // cfg.native_rows
        n_blocks = p.N // cfg.native_cols
        self.blocks = [(mb, nb) for nb in range(n_blocks) for mb in range(m_blocks)]
        self.flush_position = self.spacing * len(self.blocks)
        self.a_streams = [a_lane_stream(p.a, row) for row in range(p.M)]
        self.b_streams = [
            b_lane_stream(p.b, col, self.level, self.length) for col in range(p.N)
        ]
        self.idle_b = bubble_lane(self.level, self.precision)
        value_bits = self.precision.value_bits
        index_bits = INDEX_BITS if self.level.is_sparse else 0
        self.a_word_bits = SIZE * (value_bits + index_bits)
        self.b_word_bits = SIZE * value_bits

    def _locate(self, position: int) -> Optional[Tuple[int, int]]:
        if position < 0 or position >= self.flush_position:
            return None
        block, offset = divmod(position, self.spacing)
        if offset >= self.length:
            return None
        return block, offset

    def a_word(self, y: int, r: int, cycle: int) -> Operand:
        where = self._locate(cycle - SIZE * y)
        if where is None:
            return BUBBLE
        block, offset = where
        mb, _ = self.blocks[block]
        return self.a_streams[mb * self.cfg.native_rows + SIZE * y + r][offset]

    def b_lane(self, x: int, c: int, cycle: int) -> BLane:
        where = self._locate(cycle - SIZE * x)
        if where is None:
            return self.idle_b
        block, offset = where
        _, nb = self.blocks[block]
        return self.b_streams[nb * self.cfg.native_cols + SIZE * x + c][offset]

    def accumulate(self, cycle: int) -> bool:
        """Control flag driven into the corner slice."""
        if cycle == self.flush_position:
            return False
        if 0 <= cycle < self.flush_position and cycle % self.spacing == 0:
            return False
        return True

    def reads(self, cycle: int) -> List[Tuple[str, int]]:
        """(bank, bits) pairs read on ``cycle``."""
        out: List[Tuple[str, int]] = []
        for y in range(self.cfg.Y):
            if self._locate(cycle - SIZE * y) is not None:
                out.append((f"A{y}", self.a_word_bits))
        gs, nz = self.level.group_size, self.level.nonzeros_per_group
        for x in range(self.cfg.X):
            where = self._locate(cycle - SIZE * x)
            if where is None or where[1] % nz:
                continue
            for k in range(gs):
                out.append((f"B{x}.{k}", self.b_word_bits))
        return out

    @property
    def last_read_cycle(self) -> int:
        return self.flush_position + SIZE * max(self.cfg.X, self.cfg.Y)


def bank_schedule(cfg: FabricConfig, p: GemmProblem) -> pd.DataFrame:
    """
    Per-cycle bank read plan of a GEMM.

    Returns:
        DataFrame with columns cycle, bank, bits, width_bits

    Raises:
        CapabilityError: If the fabric cannot run the problem's level
        BandwidthInfeasible: If any read exceeds its bank width
    """
    _check_capability(cfg, p)
    padded = pad_problem(cfg, p)
    controller = _StreamController(cfg, padded)
    widths = bank_layout(cfg).widths()
    rows = []
    for cycle in range(controller.last_read_cycle + 1):
        for bank, bits in controller.reads(cycle):
            width = widths.get(bank)
            if width is None or bits > width:
                raise BandwidthInfeasible(
                    f"Cycle {cycle}: bank {bank} asked for {bits} bits, "
                    f"width is {width}"
                )
            rows.append((cycle, bank, bits, width))
    return pd.DataFrame(rows, columns=["cycle", "bank", "bits", "width_bits"])


def _check_capability(cfg: FabricConfig, p: GemmProblem) -> None:
    if not cfg.supports(p.a_level):
        raise CapabilityError(
            f"{p.a_level.value} tiles cannot run on a {cfg.mode_capability.value} "
            "fabric; materialize A as dense first"
        )
    if cfg.precision is not p.precision:
        raise DimensionError(
            f"Fabric is {cfg.precision.value} but the problem is "
            f"{p.precision.value}"
        )


@dataclass
class GemmResult:
    """Outcome of one fabric GEMM run."""

    c: DenseMatrix
    m: int
    n: int
    cycles: int
    steady_state_cycles_per_tile: int
    tiles: int
    macs: int
    utilization: float
    padding_waste: float
    bank_peaks: Dict[str, int] = field(default_factory=dict)

    def trimmed(self) -> npt.NDArray[Any]:
        """C restricted to the un-padded M×N region."""
        return self.c.data[: self.m, : self.n]

    @property
    def checksum(self) -> str:
        data = np.ascontiguousarray(self.trimmed())
        return hashlib.sha256(data.tobytes()).hexdigest()

    def summary(self) -> Dict[str, Any]:
        return {
            "cycles": self.cycles,
            "steady_state_cycles_per_tile": self.steady_state_cycles_per_tile,
            "tiles": self.tiles,
            "macs": self.macs,
            "utilization": round(self.utilization, 6),
            "padding_waste": round(self.padding_waste, 6),
            "checksum_of_C": self.checksum,
        }


def run_gemm(
    cfg: FabricConfig, p: GemmProblem, trace: Optional[TraceRecorder] = None
) -> GemmResult:
    """
    Simulate a GEMM on the fabric cycle by cycle.

    Args:
        cfg: Fabric geometry and capability
        p: Problem; padded automatically unless ``cfg.auto_pad`` is off
        trace: Optional recorder for per-cycle events

    Returns:
        GemmResult with the padded C, total cycles and utilization figures

    Raises:
        CapabilityError: Sparse A on a dense-only fabric
        DimensionError: Misaligned dimensions with auto-padding disabled
    """
    _check_capability(cfg, p)
    padded = pad_problem(cfg, p)
    check_reduction(padded.a, padded.b)
    schedule = bank_schedule(cfg, padded)
    bank_peaks: Dict[str, int] = (
        {str(k): int(v) for k, v in schedule.groupby("bank")["bits"].max().items()}
        if not schedule.empty
        else {}
    )

    controller = _StreamController(cfg, padded)
    level, precision = controller.level, controller.precision
    grid: List[List[SliceState]] = [
        [
            initial_slice_state(
                SliceConfig(x == 0, y == 0, precision), level, f"{y},{x}"
            )
            for x in range(cfg.X)
        ]
        for y in range(cfg.Y)
    ]
    dtype = np.int32 if precision is Precision.INT8 else np.float32
    c = np.zeros((padded.M, padded.N), dtype=dtype)
    emitted = [[0] * cfg.X for _ in range(cfg.Y)]
    expected = SIZE * len(controller.blocks)
    remaining = cfg.Y * cfg.X * expected
    limit = controller.flush_position + SIZE * (cfg.X + cfg.Y) + 4 * SIZE
    logger.debug(
        "GEMM %d×%d×%d on %d×%d fabric at %s: %d blocks, %d cycles per tile",
        padded.M, padded.logical_k, padded.N, cfg.Y, cfg.X, level.value,
        len(controller.blocks), controller.spacing,
    )

    cycle = 0
    while remaining:
        if cycle > limit:
            raise RuntimeError(f"Fabric did not drain after {cycle} cycles")
        before = [row[:] for row in grid]
        for y in range(cfg.Y):
            for x in range(cfg.X):
                if x == 0:
                    a_rows = tuple(controller.a_word(y, r, cycle) for r in range(SIZE))
                else:
                    a_rows = before[y][x - 1].a_out
                if y == 0:
                    b_cols = tuple(controller.b_lane(x, c_, cycle) for c_ in range(SIZE))
                else:
                    b_cols = before[y - 1][x].b_ded_out
                if x > 0:
                    flag = before[y][x - 1].accumulate_out
                elif y > 0:
                    flag = before[y - 1][0].accumulate_out
                else:
                    flag = controller.accumulate(cycle)
                state, out = slice_step(
                    before[y][x],
                    SliceInputs(a_rows, b_cols, level, precision, flag, True),
                    trace,
                )
                grid[y][x] = state
                if out.c_data is None:
                    continue
                count = emitted[y][x]
                if count >= expected:
                    raise RuntimeError(f"Slice {y},{x} emitted an extra column")
                mb, nb = controller.blocks[count // SIZE]
                row0 = mb * cfg.native_rows + SIZE * y
                col = nb * cfg.native_cols + SIZE * x + count % SIZE
                c[row0 : row0 + SIZE, col] = out.c_data
                emitted[y][x] = count + 1
                remaining -= 1
        cycle += 1

    macs = sum(state.total_macs() for row in grid for state in row)
    spe_cycles = cycle * SIZE * SIZE * cfg.Y * cfg.X
    return GemmResult(
        c=DenseMatrix(c, precision),
        m=p.M,
        n=p.N,
        cycles=cycle,
        steady_state_cycles_per_tile=controller.spacing,
        tiles=len(controller.blocks),
        macs=macs,
        utilization=macs / spe_cycles if spe_cycles else 0.0,
        padding_waste=1.0 - (p.M * p.N) / (padded.M * padded.N),
        bank_peaks=bank_peaks,
    )


def fill_drain_cycles(cfg: FabricConfig, level: SparsityLevel) -> int:
    """
    Closed-form pipeline overhead of a GEMM beyond its tile cycles.

    The flush word crosses 4(X+Y) - 2 hops to the last SPE and spends the
    A pipeline depth there before its column leaves the buffer.
    """
    return SIZE * (cfg.X + cfg.Y) - 1 + a_pipeline_depth(level)


def gemm_reference(a: ATile, b: DenseMatrix) -> npt.NDArray[Any]:
    """
    Brute-force product in the simulator's accumulation order.

    int8 is an exact integer product. bfloat16 accumulates fp32 products in
    stream order (stored compressed slots, ascending), starting from the
    first product, exactly like one SPE.
    """
    b = pad_b_rows(a, b)
    check_reduction(a, b)
    if a.precision is Precision.INT8:
        wide = decode(a).data if isinstance(a, CompressedMatrix) else a.data
        product = wide.astype(np.int64) @ b.data.astype(np.int64)
        if product.size and np.abs(product).max() >= 2**31:
            raise OverflowError("int32 accumulator range exceeded")
        return product.astype(np.int32)

    bvals = b.data.astype(np.float32)
    rows = a.rows
    if isinstance(a, CompressedMatrix):
        gs, nz = a.level.group_size, a.level.nonzeros_per_group
        values = a.values.astype(np.float32)
        positions = (
            (np.arange(a.stored_per_row) // nz) * gs + a.indices.astype(np.int64)
        )
    else:
        values = a.data.astype(np.float32)
        positions = np.tile(np.arange(a.cols), (rows, 1))
    acc = np.zeros((rows, b.cols), dtype=np.float32)
    for j in range(values.shape[1]):
        product = values[:, j][:, None] * bvals[positions[:, j], :]
        acc = product if j == 0 else acc + product
    return acc

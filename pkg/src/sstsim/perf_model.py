"""Analytical layer and network performance estimates.

Each layer is a GEMM padded to the fabric's native block. Compute time
is block count × tile cycles plus a fill/drain constant measured on the
cycle simulator. Memory time is DRAM traffic over bandwidth. The two are
overlapped (max) by default or serialized (sum) for sensitivity runs.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .errors import CapabilityError
from .fabric import (
    Capability,
    FabricConfig,
    GemmProblem,
    fill_drain_cycles,
    run_gemm,
)
from .sparse_format import (
    DenseMatrix,
    Precision,
    SparsityLevel,
    compression_ratio,
    prune_magnitude,
)
from .sst_slice import MIN_TILE_CYCLES, tile_cycles

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LayerSpec:
    """One GEMM of a network (convolutions already lowered).

    ``weights`` is false for GEMMs between two activations (attention
    scores and context), which store nothing and stream A from DRAM as an
    activation. ``sparsifiable`` marks layers a uniform sparsity setting
    may re-target.
    """

    name: str
    M: int
    K: int
    N: int
    level: SparsityLevel = SparsityLevel.DENSE
    count: int = 1
    precision: Precision = Precision.INT8
    weights: bool = True
    sparsifiable: bool = True

    def __post_init__(self) -> None:
        if min(self.M, self.K, self.N) < 1 or self.count < 1:
            raise ValueError(f"Layer '{self.name}' needs positive dims and count")
        if self.level.is_sparse and not (self.weights and self.sparsifiable):
            raise ValueError(f"Layer '{self.name}' cannot be sparse")


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layers of one network, all in one precision."""

    name: str
    layers: Tuple[LayerSpec, ...]
    source: str = ""

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError(f"Network '{self.name}' has no layers")
        precisions = {layer.precision for layer in self.layers}
        if len(precisions) != 1:
            raise ValueError(f"Network '{self.name}' mixes precisions")

    @property
    def precision(self) -> Precision:
        return self.layers[0].precision

    def layer_count(self) -> int:
        return sum(layer.count for layer in self.layers)

    def level_counts(self) -> Dict[str, int]:
        """Repetition-weighted layer count per sparsity level."""
        counts: Dict[str, int] = {}
        for layer in self.layers:
            counts[layer.level.value] = counts.get(layer.level.value, 0) + layer.count
        return counts

    def with_uniform_level(self, level: SparsityLevel) -> "NetworkSpec":
        """Copy with every sparsifiable weight layer set to ``level``."""
        layers = tuple(
            replace(layer, level=level)
            if layer.weights and layer.sparsifiable
            else layer
            for layer in self.layers
        )
        return NetworkSpec(f"{self.name}@{level.value}", layers, self.source)

    def with_precision(self, precision: Precision) -> "NetworkSpec":
        layers = tuple(replace(layer, precision=precision) for layer in self.layers)
        return NetworkSpec(self.name, layers, self.source)


@dataclass(frozen=True)
class PlatformSpec:
    """Fabric, clock and DRAM figures used by the estimator."""

    name: str
    fabric: FabricConfig
    dram_bw_bytes_per_s: float
    frequencies: Dict[Precision, float] = field(hash=False)
    overlap: bool = True
    fill_drain_override: Optional[int] = None
    calibrate: bool = True

    def __post_init__(self) -> None:
        if self.dram_bw_bytes_per_s <= 0:
            raise ValueError("DRAM bandwidth must be positive")
        for precision, hz in self.frequencies.items():
            if hz <= 0:
                raise ValueError(f"{precision.value} frequency must be positive")

    def frequency(self, precision: Precision) -> float:
        try:
            return self.frequencies[precision]
        except KeyError:
            raise ValueError(
                f"Platform '{self.name}' has no {precision.value} frequency"
            ) from None


@dataclass
class LayerEstimate:
    """Cost breakdown of one layer on one platform."""

    layer: LayerSpec
    level: SparsityLevel
    m_hat: int
    k_hat: int
    n_hat: int
    blocks: int
    tile_cycles: int
    compute_cycles: int
    weight_bytes: float
    stored_weight_bytes: float
    dense_weight_bytes: float
    activation_bytes: float
    compute_time_s: float
    memory_time_s: float
    layer_time_s: float

    @property
    def bound(self) -> str:
        return "compute" if self.compute_time_s >= self.memory_time_s else "memory"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "layer": self.layer.name,
            "count": self.layer.count,
            "level": self.level.value,
            "M": self.layer.M,
            "K": self.layer.K,
            "N": self.layer.N,
            "M_hat": self.m_hat,
            "K_hat": self.k_hat,
            "N_hat": self.n_hat,
            "blocks": self.blocks,
            "tile_cycles": self.tile_cycles,
            "compute_cycles": self.compute_cycles,
            "weight_bytes": self.weight_bytes,
            "activation_bytes": self.activation_bytes,
            "compute_time_s": self.compute_time_s,
            "memory_time_s": self.memory_time_s,
            "layer_time_s": self.layer_time_s,
            "bound": self.bound,
        }


def _round_up(value: int, multiple: int) -> int:
    return -(-value // multiple) * multiple


@lru_cache(maxsize=None)
def calibrate_fill_drain(Y: int, X: int, level: SparsityLevel) -> int:
    """
    Measure the per-GEMM fill/drain overhead on the cycle simulator.

    Runs one native block whose reduction streams in exactly the minimum
    tile spacing and subtracts that spacing from the measured cycles.
    """
    k = MIN_TILE_CYCLES * level.group_size // level.nonzeros_per_group
    rng = np.random.default_rng(0)
    a = DenseMatrix.from_values(
        rng.integers(-8, 8, size=(4 * Y, k)), Precision.INT8
    )
    if level.is_sparse:
        a = prune_magnitude(a, level)
    b = DenseMatrix.from_values(rng.integers(-8, 8, size=(k, 4 * X)), Precision.INT8)
    result = run_gemm(
        FabricConfig(Y=Y, X=X, precision=Precision.INT8),
        GemmProblem.from_dense(a, b, level),
    )
    overhead = result.cycles - result.steady_state_cycles_per_tile
    logger.info(
        "Calibrated fill/drain for %d×%d fabric at %s: %d cycles",
        Y, X, level.value, overhead,
    )
    return overhead


def fill_drain_constant(p: PlatformSpec, level: SparsityLevel) -> int:
    """Override, closed form, or a cached simulator calibration, in that order."""
    if p.fill_drain_override is not None:
        return p.fill_drain_override
    if not p.calibrate:
        return fill_drain_cycles(p.fabric, level)
    return calibrate_fill_drain(p.fabric.Y, p.fabric.X, level)


def estimate_layer(
    layer: LayerSpec, p: PlatformSpec, level: Optional[SparsityLevel] = None
) -> LayerEstimate:
    """
    Estimate one layer's time on a platform.

    Args:
        layer: GEMM shape and sparsity
        p: Platform to run on
        level: Override of the layer's level (the dense baseline passes Dense)

    Raises:
        CapabilityError: If a sparse level is requested on a dense-only fabric
    """
    level = layer.level if level is None else level
    cfg = p.fabric
    if level.is_sparse and cfg.mode_capability is Capability.DENSE_ONLY:
        raise CapabilityError(
            f"Platform '{p.name}' cannot run {level.value} layer '{layer.name}'"
        )
    precision = layer.precision
    value_bytes = precision.value_bits / 8
    m_hat = _round_up(layer.M, cfg.native_rows)
    n_hat = _round_up(layer.N, cfg.native_cols)
    k_hat = _round_up(layer.K, level.group_size)
    blocks = (m_hat // cfg.native_rows) * (n_hat // cfg.native_cols)
    per_tile = tile_cycles(k_hat * level.nonzeros_per_group // level.group_size)
    compute_cycles = blocks * per_tile + fill_drain_constant(p, level)

    ratio = compression_ratio(level, precision)
    activation_bytes = (k_hat * n_hat + m_hat * n_hat) * value_bytes
    if layer.weights:
        weight_bytes = m_hat * k_hat * value_bytes / ratio
        dense_weight_bytes = layer.M * layer.K * value_bytes
        stored_weight_bytes = dense_weight_bytes / ratio
    else:
        weight_bytes = dense_weight_bytes = stored_weight_bytes = 0.0
        activation_bytes += m_hat * k_hat * value_bytes

    compute_time = compute_cycles / p.frequency(precision)
    memory_time = (weight_bytes + activation_bytes) / p.dram_bw_bytes_per_s
    layer_time = (
        max(compute_time, memory_time) if p.overlap else compute_time + memory_time
    )
    return LayerEstimate(
        layer=layer,
        level=level,
        m_hat=m_hat,
        k_hat=k_hat,
        n_hat=n_hat,
        blocks=blocks,
        tile_cycles=per_tile,
        compute_cycles=compute_cycles,
        weight_bytes=weight_bytes,
        stored_weight_bytes=stored_weight_bytes,
        dense_weight_bytes=dense_weight_bytes,
        activation_bytes=activation_bytes,
        compute_time_s=compute_time,
        memory_time_s=memory_time,
        layer_time_s=layer_time,
    )


@dataclass
class NetworkEstimate:
    """Network totals against the dense baseline."""

    network: NetworkSpec
    total_time_s: float
    baseline_time_s: float
    speedup: float
    weight_reduction: float
    layers: List[Tuple[LayerEstimate, LayerEstimate]]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "network": self.network.name,
            "precision": self.network.precision.value,
            "layers": self.network.layer_count(),
            "level_counts": self.network.level_counts(),
            "total_time_s": self.total_time_s,
            "baseline_time_s": self.baseline_time_s,
            "speedup": self.speedup,
            "weight_reduction": self.weight_reduction,
        }


def estimate_network(
    n: NetworkSpec, p: PlatformSpec, baseline: PlatformSpec
) -> NetworkEstimate:
    """
    Total time, speedup and weight-memory reduction of a network.

    The baseline runs every layer dense on its own platform, keeping the
    zeros of pruned weights.
    """
    pairs: List[Tuple[LayerEstimate, LayerEstimate]] = []
    total = baseline_total = 0.0
    dense_weights = stored_weights = 0.0
    for layer in n.layers:
        estimate = estimate_layer(layer, p)
        reference = estimate_layer(layer, baseline, SparsityLevel.DENSE)
        pairs.append((estimate, reference))
        total += estimate.layer_time_s * layer.count
        baseline_total += reference.layer_time_s * layer.count
        dense_weights += estimate.dense_weight_bytes * layer.count
        stored_weights += estimate.stored_weight_bytes * layer.count
    return NetworkEstimate(
        network=n,
        total_time_s=total,
        baseline_time_s=baseline_total,
        speedup=baseline_total / total,
        weight_reduction=dense_weights / stored_weights if stored_weights else 1.0,
        layers=pairs,
    )


def estimates_frame(estimate: NetworkEstimate) -> pd.DataFrame:
    """Per-layer rows plus the baseline time and layer speedup."""
    rows = []
    for ours, reference in estimate.layers:
        row = ours.to_dict()
        row["baseline_time_s"] = reference.layer_time_s
        row["speedup"] = reference.layer_time_s / ours.layer_time_s
        rows.append(row)
    return pd.DataFrame(rows)


def effective_throughput(
    p: PlatformSpec,
    level: SparsityLevel,
    precision: Optional[Precision] = None,
) -> float:
    """Peak ops/s credited with the sparsity speedup, in TOPs."""
    precision = p.fabric.precision if precision is None else precision
    cfg = p.fabric
    ops = 2 * cfg.native_rows * cfg.native_cols * p.frequency(precision)
    return ops * level.speedup_factor / 1e12


def area_efficiency(throughput_tops: float, area: float) -> float:
    """Throughput per unit area."""
    if area <= 0:
        raise ValueError("Area must be positive")
    return throughput_tops / area

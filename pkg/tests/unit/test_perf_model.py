"""Unit tests for the analytical performance model."""

from dataclasses import replace
from typing import Dict

import pytest

from sstsim.errors import CapabilityError
from sstsim.fabric import Capability, FabricConfig, fill_drain_cycles, run_gemm
from sstsim.matrix_io import generate_problem
from sstsim.perf_model import (
    LayerSpec,
    NetworkSpec,
    PlatformSpec,
    area_efficiency,
    calibrate_fill_drain,
    effective_throughput,
    estimate_layer,
    estimate_network,
    estimates_frame,
    fill_drain_constant,
)
from sstsim.reference import ReferenceCatalog
from sstsim.sparse_format import Precision, SparsityLevel, compression_ratio
from sstsim.workloads import NetworkLibrary

pytestmark = pytest.mark.unit

FREQUENCIES: Dict[Precision, float] = {Precision.INT8: 5e8, Precision.BFLOAT16: 4e8}


def make_platform(
    Y: int = 1,
    X: int = 1,
    capability: Capability = Capability.DYNAMIC_SPARSE,
    dram_bw: float = 1e12,
    overlap: bool = True,
) -> PlatformSpec:
    return PlatformSpec(
        name="test",
        fabric=FabricConfig(Y=Y, X=X, mode_capability=capability),
        dram_bw_bytes_per_s=dram_bw,
        frequencies=FREQUENCIES,
        overlap=overlap,
        calibrate=False,
    )


@pytest.mark.parametrize(
    "level,cycles",
    [
        (SparsityLevel.DENSE, 2056),
        (SparsityLevel.S2OF4, 1033),
        (SparsityLevel.S1OF3, 692),
        (SparsityLevel.S1OF4, 520),
    ],
)
def test_compute_cycles_agree_with_simulator(level: SparsityLevel, cycles: int) -> None:
    """An 8×512×8 GEMM on one slice: model and simulator give the same count."""
    layer = LayerSpec("gemm", M=8, K=512, N=8, level=level)
    estimate = estimate_layer(layer, make_platform())
    assert estimate.compute_cycles == cycles

    simulated = run_gemm(
        FabricConfig(), generate_problem(8, 512, 8, level, Precision.INT8, seed=0)
    )
    assert simulated.cycles == cycles


@pytest.mark.parametrize("level", list(SparsityLevel))
def test_calibration_matches_closed_form(level: SparsityLevel) -> None:
    assert calibrate_fill_drain(2, 2, level) == fill_drain_cycles(FabricConfig(Y=2, X=2), level)


def test_fill_drain_override_wins() -> None:
    platform = PlatformSpec(
        "test", FabricConfig(), 1e12, FREQUENCIES, fill_drain_override=100
    )
    assert fill_drain_constant(platform, SparsityLevel.DENSE) == 100
    assert fill_drain_constant(make_platform(), SparsityLevel.S2OF4) == 9


def test_layer_is_padded_to_native_block() -> None:
    estimate = estimate_layer(LayerSpec("odd", M=5, K=10, N=9), make_platform(Y=2, X=2))
    assert (estimate.m_hat, estimate.k_hat, estimate.n_hat) == (8, 10, 16)
    assert estimate.blocks == 2
    assert estimate.tile_cycles == 10


def test_one_of_three_rounds_reduction_to_whole_groups() -> None:
    layer = LayerSpec("gemm", M=4, K=512, N=4, level=SparsityLevel.S1OF3)
    estimate = estimate_layer(layer, make_platform())
    assert estimate.k_hat == 513
    assert estimate.tile_cycles == 171


def test_short_reduction_respects_minimum_tile_spacing() -> None:
    layer = LayerSpec("gemm", M=4, K=8, N=4, level=SparsityLevel.S1OF4)
    assert estimate_layer(layer, make_platform()).tile_cycles == 4


def test_overlap_takes_max_and_serial_takes_sum() -> None:
    layer = LayerSpec("gemm", M=64, K=256, N=64)
    overlapped = estimate_layer(layer, make_platform(dram_bw=1e9))
    serial = estimate_layer(layer, make_platform(dram_bw=1e9, overlap=False))
    assert overlapped.layer_time_s == max(overlapped.compute_time_s, overlapped.memory_time_s)
    assert serial.layer_time_s == pytest.approx(serial.compute_time_s + serial.memory_time_s)
    assert serial.layer_time_s > overlapped.layer_time_s


def test_low_bandwidth_makes_layer_memory_bound() -> None:
    layer = LayerSpec("gemm", M=64, K=256, N=64)
    assert estimate_layer(layer, make_platform(dram_bw=1e6)).bound == "memory"
    assert estimate_layer(layer, make_platform(dram_bw=1e15)).bound == "compute"


def test_weight_bytes_shrink_by_compression_ratio() -> None:
    dense = estimate_layer(LayerSpec("w", M=64, K=64, N=8), make_platform())
    sparse = estimate_layer(
        LayerSpec("w", M=64, K=64, N=8, level=SparsityLevel.S1OF4), make_platform()
    )
    ratio = compression_ratio(SparsityLevel.S1OF4, Precision.INT8)
    assert sparse.weight_bytes == pytest.approx(dense.weight_bytes / ratio)
    assert sparse.activation_bytes == dense.activation_bytes


def test_activation_only_layer_stores_no_weights() -> None:
    """Attention-style GEMMs move both operands as activations."""
    layer = LayerSpec("scores", M=16, K=8, N=16, weights=False)
    estimate = estimate_layer(layer, make_platform())
    assert estimate.weight_bytes == 0
    assert estimate.dense_weight_bytes == 0
    assert estimate.activation_bytes == (8 * 16 + 16 * 16 + 16 * 8) * 1.0


def test_activation_only_layer_cannot_be_sparse() -> None:
    with pytest.raises(ValueError):
        LayerSpec("scores", M=16, K=8, N=16, level=SparsityLevel.S2OF4, weights=False)


def test_dense_only_platform_rejects_sparse_layer() -> None:
    layer = LayerSpec("w", M=8, K=8, N=8, level=SparsityLevel.S2OF4)
    with pytest.raises(CapabilityError):
        estimate_layer(layer, make_platform(capability=Capability.DENSE_ONLY))


def test_network_rejects_mixed_precision() -> None:
    with pytest.raises(ValueError):
        NetworkSpec(
            "mixed",
            (
                LayerSpec("a", 4, 4, 4),
                LayerSpec("b", 4, 4, 4, precision=Precision.BFLOAT16),
            ),
        )


def _toy_network() -> NetworkSpec:
    return NetworkSpec(
        "toy",
        (
            LayerSpec("embed", M=64, K=64, N=32, sparsifiable=False),
            LayerSpec("fc1", M=256, K=128, N=32, count=4),
            LayerSpec("scores", M=32, K=16, N=32, count=8, weights=False),
            LayerSpec("fc2", M=128, K=256, N=32, count=4),
        ),
    )


def test_uniform_level_only_touches_sparsifiable_weights() -> None:
    network = _toy_network().with_uniform_level(SparsityLevel.S1OF4)
    levels = [layer.level for layer in network.layers]
    assert levels == [
        SparsityLevel.DENSE,
        SparsityLevel.S1OF4,
        SparsityLevel.DENSE,
        SparsityLevel.S1OF4,
    ]
    assert network.level_counts() == {"dense": 9, "1:4": 8}
    assert network.layer_count() == 17


@pytest.mark.parametrize("level", [SparsityLevel.S2OF4, SparsityLevel.S1OF3, SparsityLevel.S1OF4])
def test_network_weight_reduction(level: SparsityLevel) -> None:
    """Only sparsified weights shrink, so the reduction stays below the ratio."""
    network = _toy_network().with_uniform_level(level)
    platform = make_platform(Y=2, X=2)
    baseline = make_platform(Y=2, X=2, capability=Capability.DENSE_ONLY)
    estimate = estimate_network(network, platform, baseline)
    ratio = compression_ratio(level, Precision.INT8)
    assert 1.0 < estimate.weight_reduction < ratio

    all_sparse = NetworkSpec("all", (LayerSpec("w", 64, 64, 32, level=level),))
    only = estimate_network(all_sparse, platform, baseline)
    assert only.weight_reduction == pytest.approx(ratio)


def test_dense_network_has_unit_speedup_on_equal_platforms() -> None:
    network = _toy_network()
    estimate = estimate_network(network, make_platform(2, 2), make_platform(2, 2))
    assert estimate.speedup == pytest.approx(1.0)
    assert estimate.weight_reduction == 1.0


def test_speedup_grows_with_sparsity(
    catalog: ReferenceCatalog, library: NetworkLibrary, clean_env: None
) -> None:
    """Sparser weights never make a network slower."""
    ours = replace(catalog.sst_platform(), calibrate=False)
    baseline = replace(catalog.baseline_platform(), calibrate=False)
    base = library.get("deit_b")
    speedups = [
        estimate_network(base.with_uniform_level(level), ours, baseline).speedup
        for level in (
            SparsityLevel.DENSE,
            SparsityLevel.S2OF4,
            SparsityLevel.S1OF3,
            SparsityLevel.S1OF4,
        )
    ]
    assert speedups == sorted(speedups)
    assert speedups[0] == pytest.approx(1.0, abs=0.02)


def test_estimates_frame_lists_every_layer() -> None:
    network = _toy_network().with_uniform_level(SparsityLevel.S2OF4)
    estimate = estimate_network(
        network, make_platform(2, 2), make_platform(2, 2, Capability.DENSE_ONLY)
    )
    frame = estimates_frame(estimate)
    assert list(frame["layer"]) == ["embed", "fc1", "scores", "fc2"]
    assert {"baseline_time_s", "speedup", "bound", "M_hat"} <= set(frame.columns)
    assert (frame["speedup"] > 0).all()
    summary = estimate.to_dict()
    assert summary["layers"] == 17
    assert summary["precision"] == "int8"


def test_published_throughput(catalog: ReferenceCatalog, clean_env: None) -> None:
    """40×40 SPEs at 601 MHz with the 1:4 speedup give about 7.69 TOPs."""
    platform = catalog.sst_platform(Precision.INT8)
    tops = effective_throughput(platform, SparsityLevel.S1OF4)
    assert tops == pytest.approx(7.69, rel=0.005)
    assert area_efficiency(tops, 0.145) == pytest.approx(53.03, rel=0.005)


def test_throughput_scales_with_speedup() -> None:
    platform = make_platform(2, 2)
    dense = effective_throughput(platform, SparsityLevel.DENSE)
    assert dense == pytest.approx(2 * 8 * 8 * 5e8 / 1e12)
    assert effective_throughput(platform, SparsityLevel.S1OF3) == pytest.approx(3 * dense)


def test_area_must_be_positive() -> None:
    with pytest.raises(ValueError):
        area_efficiency(1.0, 0.0)


def test_platform_validation() -> None:
    with pytest.raises(ValueError):
        PlatformSpec("bad", FabricConfig(), 0.0, FREQUENCIES)
    with pytest.raises(ValueError):
        PlatformSpec("bad", FabricConfig(), 1e9, {Precision.INT8: -1.0})
    platform = PlatformSpec("partial", FabricConfig(), 1e9, {Precision.INT8: 1e8})
    with pytest.raises(ValueError):
        platform.frequency(Precision.BFLOAT16)

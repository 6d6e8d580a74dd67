"""Main sstsim module: one facade over simulation, estimation and reports."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .fabric import (
    Capability,
    FabricConfig,
    GemmProblem,
    count_brams,
    gemm_reference,
    run_gemm,
)
from .matrix_io import (
    generate_problem,
    identity_problem,
    load_matrix,
    load_problem,
    problem_from_dense,
    prune_stats,
    save_matrix,
)
from .perf_model import NetworkEstimate, estimate_network, estimates_frame
from .reference import PlatformOverrides, ReferenceCatalog
from .sparse_format import (
    CompressedMatrix,
    DenseMatrix,
    Precision,
    SparsityLevel,
    decode,
    prune_magnitude,
)
from .tables import failed_rows, reproduce_tables
from .trace import TraceRecorder
from .verification import (
    VerificationResult,
    bit_mismatches,
    results_frame,
    run_random_suite,
)
from .workloads import NetworkLibrary

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("json", "csv")


@dataclass
class SimulationRequest:
    """Everything ``sim`` needs to build and run one problem."""

    Y: int = 1
    X: int = 1
    level: SparsityLevel = SparsityLevel.DENSE
    precision: Precision = Precision.INT8
    M: int = 4
    K: int = 16
    N: int = 4
    seed: int = 0
    identity: bool = False
    problem_file: Optional[Path] = None
    a_file: Optional[Path] = None
    depth: int = 512
    dense_baseline: bool = False
    auto_pad: bool = True
    trace_file: Optional[Path] = None


@dataclass
class SimulationReport:
    """Outcome of one ``sim`` run."""

    passed: bool
    summary: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.summary, passed=self.passed)


def write_report(
    data: Union[Dict[str, Any], pd.DataFrame],
    path: Union[str, Path],
    fmt: str = "json",
) -> Path:
    """
    Write a report as JSON or CSV.

    Output is deterministic: keys are sorted and nothing time-dependent is
    included.
    """
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"Unknown report format '{fmt}' (expected json or csv)")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        frame = data if isinstance(data, pd.DataFrame) else pd.DataFrame([data])
        frame.to_csv(path, index=False)
        return path
    payload = (
        data.to_dict(orient="records") if isinstance(data, pd.DataFrame) else data
    )
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    return path


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (SparsityLevel, Precision, Capability)):
        return value.value
    raise TypeError(f"Cannot serialize {type(value).__name__}")


class SstToolkit:
    """Entry point used by the command line."""

    def __init__(self, data_dir: str = "data"):
        """
        Initialize the toolkit.

        Args:
            data_dir: Directory holding reference_values.yaml and networks/
        """
        self.data_dir = Path(data_dir)
        self.networks = NetworkLibrary(self.data_dir)
        self._catalog: Optional[ReferenceCatalog] = None

    @property
    def catalog(self) -> ReferenceCatalog:
        if self._catalog is None:
            self._catalog = ReferenceCatalog(self.data_dir)
        return self._catalog

    def build_problem(self, request: SimulationRequest) -> GemmProblem:
        """
        Problem for a simulation request.

        Priority: descriptor file, then an A file (with a seeded B), then the
        identity product, then a seeded random problem.
        """
        if request.problem_file is not None:
            return load_problem(request.problem_file)
        if request.a_file is not None:
            a = load_matrix(request.a_file)
            k = a.logical_cols if isinstance(a, CompressedMatrix) else a.cols
            rng = np.random.default_rng(request.seed)
            if a.precision is Precision.INT8:
                b = DenseMatrix.from_values(
                    rng.integers(-8, 8, size=(k, request.N)), a.precision
                )
            else:
                b = DenseMatrix.from_floats(rng.standard_normal((k, request.N)))
            if isinstance(a, DenseMatrix):
                return problem_from_dense(a, b, request.level)
            return GemmProblem(a, b)
        if request.identity:
            return identity_problem(
                request.K, request.N, request.precision, request.seed
            )
        return generate_problem(
            request.M,
            request.K,
            request.N,
            request.level,
            request.precision,
            request.seed,
        )

    def simulate(self, request: SimulationRequest) -> SimulationReport:
        """Run one problem on the fabric and check it against the oracle."""
        problem = self.build_problem(request)
        capability = Capability.DYNAMIC_SPARSE
        if request.dense_baseline:
            capability = Capability.DENSE_ONLY
            problem = problem.materialized_dense()
        cfg = FabricConfig(
            Y=request.Y,
            X=request.X,
            precision=problem.precision,
            mode_capability=capability,
            bank_depth=request.depth,
            auto_pad=request.auto_pad,
        )
        trace = TraceRecorder() if request.trace_file is not None else None
        result = run_gemm(cfg, problem, trace)
        expected = gemm_reference(problem.a, problem.b)
        mismatches = bit_mismatches(result.trimmed(), expected)
        if request.identity:
            mismatches += bit_mismatches(
                result.trimmed().astype(problem.b.data.dtype), problem.b.data
            )
        if trace is not None and request.trace_file is not None:
            trace.write_csv(request.trace_file)

        summary = result.summary()
        summary.update(
            {
                "Y": cfg.Y,
                "X": cfg.X,
                "level": problem.a_level.value,
                "precision": problem.precision.value,
                "M": problem.M,
                "K": problem.logical_k,
                "N": problem.N,
                "bram_counts": count_brams(cfg),
                "mismatches": mismatches,
            }
        )
        if mismatches:
            logger.error("Simulator output differs from the oracle in %d entries", mismatches)
        return SimulationReport(mismatches == 0, summary)

    def estimate(
        self,
        network: str,
        uniform: Optional[SparsityLevel] = None,
        overrides: Optional[PlatformOverrides] = None,
        baseline_frequency_hz: Optional[float] = None,
    ) -> Tuple[NetworkEstimate, pd.DataFrame]:
        """
        Estimate a network on the SST platform against the dense baseline.

        Args:
            network: Descriptor path or the name of a shipped network
            uniform: Re-target every sparsifiable layer to this level
            overrides: Fabric size, DRAM bandwidth, frequency and overlap mode
            baseline_frequency_hz: Baseline clock for the network's precision
        """
        spec = self.networks.get(network)
        if uniform is not None:
            spec = spec.with_uniform_level(uniform)
        overrides = overrides or PlatformOverrides()
        baseline_overrides = PlatformOverrides(
            Y=overrides.Y,
            X=overrides.X,
            dram_bw=overrides.dram_bw,
            overlap=overrides.overlap,
        )
        if baseline_frequency_hz is not None:
            baseline_overrides.frequency_hz[spec.precision] = baseline_frequency_hz
        ours = self.catalog.sst_platform(spec.precision, overrides)
        baseline = self.catalog.baseline_platform(spec.precision, baseline_overrides)
        estimate = estimate_network(spec, ours, baseline)
        logger.info(
            "%s: speedup %.3f, weight reduction %.3f",
            spec.name, estimate.speedup, estimate.weight_reduction,
        )
        return estimate, estimates_frame(estimate)

    @staticmethod
    def estimate_report(
        estimate: NetworkEstimate, frame: pd.DataFrame, fmt: str
    ) -> Union[Dict[str, Any], pd.DataFrame]:
        """JSON nests layers under the aggregate; CSV appends a total row."""
        aggregate = estimate.to_dict()
        if fmt == "json":
            return dict(aggregate, layers=frame.to_dict(orient="records"))
        total = {
            "layer": "TOTAL",
            "layer_time_s": estimate.total_time_s,
            "baseline_time_s": estimate.baseline_time_s,
            "speedup": estimate.speedup,
            "weight_reduction": estimate.weight_reduction,
        }
        return pd.concat([frame, pd.DataFrame([total])], ignore_index=True)

    def prune(
        self,
        input_path: Union[str, Path],
        level: SparsityLevel,
        output_path: Union[str, Path],
    ) -> Dict[str, Any]:
        """Magnitude-prune a matrix file and write the pruned dense matrix."""
        matrix = load_matrix(input_path)
        dense = decode(matrix) if isinstance(matrix, CompressedMatrix) else matrix
        save_matrix(prune_magnitude(dense, level), output_path)
        stats = prune_stats(dense, level)
        stats["output"] = str(output_path)
        return stats

    def verify(
        self, count: int = 200, seed: int = 0, workers: Optional[int] = None
    ) -> Tuple[List[VerificationResult], pd.DataFrame]:
        results = run_random_suite(count, seed, workers)
        return results, results_frame(results)

    def tables(self, skip_simulation: bool = False) -> Tuple[pd.DataFrame, pd.DataFrame]:
        """All reproduction rows and the gating rows that failed."""
        frame = reproduce_tables(self.catalog, self.networks, skip_simulation)
        return frame, failed_rows(frame)

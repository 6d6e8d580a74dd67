"""sstsim: cycle simulator and performance model for sparse systolic tensor slices."""

__version__ = "0.1.0"

from .core import SimulationRequest, SstToolkit
from .fabric import FabricConfig, GemmProblem, count_brams, run_gemm
from .perf_model import LayerSpec, NetworkSpec, PlatformSpec, estimate_network
from .sparse_format import (
    CompressedMatrix,
    DenseMatrix,
    Precision,
    SparsityLevel,
    decode,
    encode,
    prune_magnitude,
)

__all__ = [
    "SstToolkit",
    "SimulationRequest",
    "FabricConfig",
    "GemmProblem",
    "count_brams",
    "run_gemm",
    "LayerSpec",
    "NetworkSpec",
    "PlatformSpec",
    "estimate_network",
    "CompressedMatrix",
    "DenseMatrix",
    "Precision",
    "SparsityLevel",
    "decode",
    "encode",
    "prune_magnitude",
]

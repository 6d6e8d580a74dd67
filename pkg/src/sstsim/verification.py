"""Randomized oracle checks of the fabric simulator."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np
import numpy.typing as npt
import pandas as pd

from .fabric import FabricConfig, GemmProblem, gemm_reference, run_gemm
from .matrix_io import generate_problem
from .sparse_format import Precision, SparsityLevel

logger = logging.getLogger(__name__)

FABRIC_SIZES = (1, 2, 3)
MAX_RANDOM_K = 24


@dataclass(frozen=True)
class VerificationCase:
    """One randomized fabric problem."""

    index: int
    Y: int
    X: int
    level: SparsityLevel
    precision: Precision
    M: int
    K: int
    N: int
    seed: int

    def problem(self) -> GemmProblem:
        return generate_problem(
            self.M, self.K, self.N, self.level, self.precision, self.seed
        )

    def fabric(self) -> FabricConfig:
        return FabricConfig(Y=self.Y, X=self.X, precision=self.precision)


@dataclass
class VerificationResult:
    case: VerificationCase
    passed: bool
    cycles: int
    checksum: str
    mismatches: int
    error: str = ""

    def to_dict(self) -> Dict[str, Any]:
        c = self.case
        return {
            "case": c.index,
            "Y": c.Y,
            "X": c.X,
            "level": c.level.value,
            "precision": c.precision.value,
            "M": c.M,
            "K": c.K,
            "N": c.N,
            "seed": c.seed,
            "passed": self.passed,
            "cycles": self.cycles,
            "mismatches": self.mismatches,
            "checksum_of_C": self.checksum,
            "error": self.error,
        }


def random_cases(count: int, seed: int) -> List[VerificationCase]:
    """
    Deterministic case list cycling through every fabric size, level and
    precision before drawing shapes at random.
    """
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    rng = np.random.default_rng(seed)
    combos = [
        (y, x, level, precision)
        for precision in Precision
        for level in SparsityLevel
        for y in FABRIC_SIZES
        for x in FABRIC_SIZES
    ]
    cases = []
    for i in range(count):
        y, x, level, precision = combos[i % len(combos)]
        cases.append(
            VerificationCase(
                index=i,
                Y=y,
                X=x,
                level=level,
                precision=precision,
                M=int(rng.integers(1, 4 * y + 4)),
                K=int(rng.integers(1, MAX_RANDOM_K + 1)),
                N=int(rng.integers(1, 4 * x + 4)),
                seed=int(rng.integers(0, 2**31)),
            )
        )
    return cases


def bit_mismatches(actual: npt.NDArray[Any], expected: npt.NDArray[Any]) -> int:
    """Number of entries whose bit patterns differ (shape mismatch counts all)."""
    if actual.shape != expected.shape:
        return max(actual.size, expected.size)
    if actual.dtype == np.float32:
        return int(np.count_nonzero(actual.view(np.uint32) != expected.view(np.uint32)))
    return int(np.count_nonzero(actual != expected))


def check_case(case: VerificationCase) -> VerificationResult:
    try:
        problem = case.problem()
        result = run_gemm(case.fabric(), problem)
        expected = gemm_reference(problem.a, problem.b)
    except Exception as e:
        logger.error("Case %d raised: %s", case.index, e)
        return VerificationResult(case, False, 0, "", -1, str(e))
    mismatches = bit_mismatches(result.trimmed(), expected)
    if mismatches:
        logger.warning(
            "Case %d (%d×%d %s %s, %d×%d×%d) has %d mismatching entries",
            case.index, case.Y, case.X, case.level.value, case.precision.value,
            case.M, case.K, case.N, mismatches,
        )
    return VerificationResult(
        case, mismatches == 0, result.cycles, result.checksum, mismatches
    )


def run_random_suite(
    count: int = 200, seed: int = 0, workers: Optional[int] = None
) -> List[VerificationResult]:
    """
    Run ``count`` random problems against the brute-force oracle.

    Cases run on a thread pool; results come back in case order.
    """
    cases = random_cases(count, seed)
    logger.info("Running %d oracle cases with seed %d", count, seed)
    if workers == 1:
        return [check_case(case) for case in cases]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(check_case, cases))


def results_frame(results: List[VerificationResult]) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict() for r in results])

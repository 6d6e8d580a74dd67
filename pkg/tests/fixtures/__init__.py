"""Matrix builders shared by the test modules."""

import numpy as np

from sstsim.sparse_format import DenseMatrix, Precision


def random_int8(
    rows: int, cols: int, seed: int, low: int = -8, high: int = 8
) -> DenseMatrix:
    """Seeded int8 matrix."""
    rng = np.random.default_rng(seed)
    return DenseMatrix.from_values(
        rng.integers(low, high, size=(rows, cols)), Precision.INT8
    )


def random_bf16(rows: int, cols: int, seed: int) -> DenseMatrix:
    """Seeded bfloat16 matrix."""
    rng = np.random.default_rng(seed)
    return DenseMatrix.from_floats(rng.standard_normal((rows, cols)))


def random_nonzero_int8(rows: int, cols: int, seed: int) -> DenseMatrix:
    """Seeded int8 matrix without zeros."""
    rng = np.random.default_rng(seed)
    magnitude = rng.integers(1, 100, size=(rows, cols))
    sign = rng.choice([-1, 1], size=(rows, cols))
    return DenseMatrix.from_values(magnitude * sign, Precision.INT8)

"""Matrix and problem interchange files.

Matrices are JSON objects tagged ``"format": "sstsim-matrix"``. Int8
values are stored as integers and bfloat16 values as their 16-bit
patterns, so a file always reloads bit-exactly.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .errors import PatternViolation, SchemaError
from .fabric import GemmProblem
from .numerics import bfloat16_bits, from_bfloat16_bits
from .sparse_format import (
    CompressedMatrix,
    DenseMatrix,
    Precision,
    SparsityLevel,
    dense_storage_bits,
    encode,
    first_violation,
    prune_magnitude,
)
from .sst_slice import ATile

logger = logging.getLogger(__name__)

MATRIX_FORMAT = "sstsim-matrix"
MATRIX_VERSION = 1
INT8_GENERATOR_RANGE = (-8, 8)


def _encode_values(values: np.ndarray, precision: Precision) -> List[List[int]]:
    if precision is Precision.BFLOAT16:
        return bfloat16_bits(values).astype(np.int64).tolist()
    return values.astype(np.int64).tolist()


def _integer_array(raw: Any, source: str, field: str) -> np.ndarray:
    try:
        array = np.asarray(raw)
    except (TypeError, ValueError):
        raise SchemaError("expected a list of integer rows", source, field) from None
    if array.size and array.dtype.kind not in "iu":
        raise SchemaError(
            f"expected integer entries, got {array.dtype.name} data", source, field
        )
    return array.astype(np.int64)


def _decode_values(
    raw: Any, precision: Precision, shape: tuple, source: str, field: str
) -> np.ndarray:
    array = _integer_array(raw, source, field)
    if array.size == 0:
        array = array.reshape(shape)
    if array.shape != shape:
        raise SchemaError(f"expected shape {shape}, got {array.shape}", source, field)
    if precision is Precision.BFLOAT16:
        if array.size and (array.min() < 0 or array.max() > 0xFFFF):
            raise SchemaError("bfloat16 patterns must be 16-bit", source, field)
        return from_bfloat16_bits(array.astype(np.uint16)).reshape(shape)
    if array.size and (array.min() < -128 or array.max() > 127):
        raise SchemaError("int8 values must lie in [-128, 127]", source, field)
    return array.astype(np.int8)


def matrix_to_dict(m: ATile) -> Dict[str, Any]:
    """Serializable form of a dense or compressed matrix."""
    if isinstance(m, CompressedMatrix):
        return {
            "format": MATRIX_FORMAT,
            "version": MATRIX_VERSION,
            "precision": m.precision.value,
            "level": m.level.value,
            "rows": m.rows,
            "cols": m.cols,
            "logical_cols": m.logical_cols,
            "values": _encode_values(m.values, m.precision),
            "indices": m.indices.astype(np.int64).tolist(),
        }
    return {
        "format": MATRIX_FORMAT,
        "version": MATRIX_VERSION,
        "precision": m.precision.value,
        "level": SparsityLevel.DENSE.value,
        "rows": m.rows,
        "cols": m.cols,
        "logical_cols": m.cols,
        "values": _encode_values(m.data, m.precision),
    }


def _require(data: Dict[str, Any], key: str, source: str, prefix: str) -> Any:
    if key not in data:
        raise SchemaError("missing required field", source, f"{prefix}{key}")
    return data[key]


def matrix_from_dict(
    data: Any, source: str = "<dict>", prefix: str = ""
) -> ATile:
    """
    Rebuild a matrix from its serialized form.

    Raises:
        SchemaError: With the offending field path
    """
    if not isinstance(data, dict):
        raise SchemaError("matrix must be an object", source, prefix.rstrip("."))
    if data.get("format") != MATRIX_FORMAT:
        raise SchemaError(
            f"expected format '{MATRIX_FORMAT}'", source, f"{prefix}format"
        )
    if data.get("version") != MATRIX_VERSION:
        raise SchemaError(
            f"unsupported version {data.get('version')!r}", source, f"{prefix}version"
        )
    try:
        precision = Precision.parse(str(_require(data, "precision", source, prefix)))
        level = SparsityLevel.parse(str(data.get("level", "dense")))
    except ValueError as e:
        raise SchemaError(str(e), source, f"{prefix}precision/level") from None
    rows = _require(data, "rows", source, prefix)
    cols = _require(data, "cols", source, prefix)
    for key, value in (("rows", rows), ("cols", cols)):
        if not isinstance(value, int) or value < 0:
            raise SchemaError(
                f"expected a non-negative integer, got {value!r}", source, f"{prefix}{key}"
            )
    raw_values = _require(data, "values", source, prefix)

    if not level.is_sparse:
        values = _decode_values(raw_values, precision, (rows, cols), source, f"{prefix}values")
        return DenseMatrix(values, precision)

    logical = data.get("logical_cols", -(-cols // level.group_size) * level.group_size)
    if not isinstance(logical, int) or logical % level.group_size or logical < cols:
        raise SchemaError(
            f"must be a multiple of {level.group_size} covering cols",
            source,
            f"{prefix}logical_cols",
        )
    stored = (rows, logical // level.group_size * level.nonzeros_per_group)
    values = _decode_values(raw_values, precision, stored, source, f"{prefix}values")
    indices = _integer_array(
        _require(data, "indices", source, prefix), source, f"{prefix}indices"
    )
    if indices.size == 0:
        indices = indices.reshape(stored)
    if indices.shape != stored:
        raise SchemaError(
            f"expected shape {stored}, got {indices.shape}", source, f"{prefix}indices"
        )
    if indices.size and (indices.min() < 0 or indices.max() > 3):
        raise SchemaError("indices must fit in 2 bits", source, f"{prefix}indices")
    return CompressedMatrix(
        level=level,
        precision=precision,
        rows=rows,
        logical_cols=logical,
        values=values,
        indices=indices.astype(np.uint8),
        cols=cols,
    )


def _read_json(path: Path) -> Any:
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(
                f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}",
                str(path),
            ) from None


def save_matrix(m: ATile, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(matrix_to_dict(m), f, indent=1, sort_keys=True)
        f.write("\n")
    return path


def load_matrix(path: Union[str, Path]) -> ATile:
    """
    Load a matrix file.

    Raises:
        FileNotFoundError: If the file does not exist
        SchemaError: On malformed content
    """
    path = Path(path)
    return matrix_from_dict(_read_json(path), str(path))


def generate_problem(
    M: int,
    K: int,
    N: int,
    level: SparsityLevel,
    precision: Precision,
    seed: int,
) -> GemmProblem:
    """
    Seeded random problem with a conforming A.

    Values are drawn first and A is then magnitude-pruned to the level.
    """
    if min(M, K, N) < 1:
        raise ValueError(f"Dimensions must be positive, got {M}×{K}×{N}")
    rng = np.random.default_rng(seed)
    if precision is Precision.INT8:
        low, high = INT8_GENERATOR_RANGE
        a = DenseMatrix.from_values(rng.integers(low, high, size=(M, K)), precision)
        b = DenseMatrix.from_values(rng.integers(low, high, size=(K, N)), precision)
    else:
        a = DenseMatrix.from_floats(rng.standard_normal((M, K)))
        b = DenseMatrix.from_floats(rng.standard_normal((K, N)))
    if level.is_sparse:
        a = prune_magnitude(a, level)
    return GemmProblem.from_dense(a, b, level)


def identity_problem(
    size: int, N: int, precision: Precision, seed: int
) -> GemmProblem:
    """Dense ``I × B`` problem; C must equal B."""
    rng = np.random.default_rng(seed)
    eye = DenseMatrix.from_values(np.eye(size, dtype=np.int64), precision)
    if precision is Precision.INT8:
        b = DenseMatrix.from_values(rng.integers(-8, 8, size=(size, N)), precision)
    else:
        b = DenseMatrix.from_floats(rng.standard_normal((size, N)))
    return GemmProblem(eye, b)


def _matrix_entry(entry: Any, base: Path, source: str, field: str) -> ATile:
    if isinstance(entry, str):
        return load_matrix(base / entry)
    return matrix_from_dict(entry, source, f"{field}.")


def problem_from_dense(a: DenseMatrix, b: DenseMatrix, level: SparsityLevel) -> GemmProblem:
    """
    Build a problem from a user-supplied dense A.

    Raises:
        PatternViolation: If A does not conform to the level
    """
    violation = first_violation(a, level)
    if violation is not None:
        row, group, count = violation
        raise PatternViolation(row, group, level.value, count)
    return GemmProblem.from_dense(a, b, level)


def load_problem(
    path: Union[str, Path], level: Optional[SparsityLevel] = None
) -> GemmProblem:
    """
    Load a problem descriptor.

    The descriptor is either generator parameters
    (``M``, ``K``, ``N``, ``precision``, ``sparsity_level``, ``seed``) or
    explicit ``A`` and ``B`` matrices, given inline or as paths relative to
    the descriptor. A dense A with a sparse ``sparsity_level`` is validated
    and compressed.

    Raises:
        FileNotFoundError: If the descriptor or a referenced matrix is missing
        SchemaError: On malformed fields
        PatternViolation: If a dense A breaks the requested pattern
    """
    path = Path(path)
    source = str(path)
    data = _read_json(path)
    if not isinstance(data, dict):
        raise SchemaError("descriptor must be a JSON object", source)
    try:
        level = level or SparsityLevel.parse(str(data.get("sparsity_level", "dense")))
    except ValueError as e:
        raise SchemaError(str(e), source, "sparsity_level") from None

    if "A" in data or "B" in data:
        a = _matrix_entry(_require(data, "A", source, ""), path.parent, source, "A")
        b = _matrix_entry(_require(data, "B", source, ""), path.parent, source, "B")
        if not isinstance(b, DenseMatrix):
            raise SchemaError("B must be dense", source, "B")
        if isinstance(a, DenseMatrix) and level.is_sparse:
            return problem_from_dense(a, b, level)
        return GemmProblem(a, b)

    for key in ("M", "K", "N"):
        value = _require(data, key, source, "")
        if not isinstance(value, int) or value < 1:
            raise SchemaError(f"expected a positive integer, got {value!r}", source, key)
    try:
        precision = Precision.parse(str(data.get("precision", "int8")))
    except ValueError as e:
        raise SchemaError(str(e), source, "precision") from None
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise SchemaError(f"expected an integer, got {seed!r}", source, "seed")
    logger.debug("Generating problem from descriptor %s", source)
    return generate_problem(data["M"], data["K"], data["N"], level, precision, seed)


def prune_stats(original: DenseMatrix, level: SparsityLevel) -> Dict[str, Any]:
    """Fraction zeroed and storage sizes of a pruning run."""
    pruned = prune_magnitude(original, level)
    compressed = encode(pruned, level)
    dense_bytes = dense_storage_bits(original.rows, original.cols, original.precision) / 8
    compressed_bytes = compressed.storage_bits() / 8
    return {
        "level": level.value,
        "precision": original.precision.value,
        "rows": original.rows,
        "cols": original.cols,
        "zero_fraction_before": original.zero_fraction(),
        "zero_fraction": pruned.zero_fraction(),
        "dense_bytes": dense_bytes,
        "compressed_bytes": compressed_bytes,
        "compression_ratio": dense_bytes / compressed_bytes if compressed_bytes else 0.0,
    }

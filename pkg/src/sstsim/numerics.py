"""bfloat16 conversions on top of numpy float32 bit patterns."""

from typing import Any

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float32]

# float64 keeps 52 fraction bits, bfloat16 keeps 7
_F64_DROPPED_BITS = np.uint64(45)
_F64_ROUND_BIAS = np.uint64(0x0FFFFFFFFFFF)
_F64_KEEP_MASK = np.uint64(0xFFFFE00000000000)


def _round_float64(wide: npt.NDArray[np.float64]) -> FloatArray:
    """Round float64 values to bfloat16 precision before narrowing to float32."""
    bits = wide.view(np.uint64)
    with np.errstate(over="ignore"):
        lsb = (bits >> _F64_DROPPED_BITS) & np.uint64(1)
        rounded = np.asarray((bits + _F64_ROUND_BIAS + lsb) & _F64_KEEP_MASK).view(
            np.float64
        )
        return np.where(np.isnan(wide), wide, rounded).astype(np.float32)


def to_bfloat16(x: Any) -> FloatArray:
    """
    Round values to the nearest bfloat16, ties to even.

    The result is a float32 array whose low 16 bits are zero, so every entry
    is exactly representable as bfloat16. float64 input is rounded on its own
    bit pattern, so it is rounded once. NaNs stay NaN (quiet).

    Args:
        x: Scalar or array-like of real numbers

    Returns:
        float32 array with bfloat16-representable values
    """
    raw = np.asarray(x)
    if raw.dtype == np.float64:
        f32 = _round_float64(raw)
    else:
        f32 = np.asarray(raw, dtype=np.float32)
    bits = f32.view(np.uint32).astype(np.uint64)
    lsb = (bits >> np.uint64(16)) & np.uint64(1)
    rounded = (bits + np.uint64(0x7FFF) + lsb) & np.uint64(0xFFFF0000)
    out = rounded.astype(np.uint32).view(np.float32)
    nan_mask = np.isnan(f32)
    if np.any(nan_mask):
        quiet = ((f32.view(np.uint32) & np.uint32(0xFFFF0000)) | np.uint32(0x00400000))
        out = np.where(nan_mask, quiet.view(np.float32), out)
    return np.asarray(out, dtype=np.float32)


def bfloat16_bits(x: Any) -> npt.NDArray[np.uint16]:
    """Return the 16-bit patterns of bfloat16-representable values."""
    f32 = np.ascontiguousarray(np.asarray(x, dtype=np.float32))
    return (f32.view(np.uint32) >> np.uint32(16)).astype(np.uint16)


def from_bfloat16_bits(bits: Any) -> FloatArray:
    """Expand 16-bit bfloat16 patterns to float32 values."""
    wide = np.asarray(bits, dtype=np.uint32) << np.uint32(16)
    return np.ascontiguousarray(wide).view(np.float32)


def is_bfloat16_representable(x: Any) -> bool:
    """True when every value survives the float32 to bfloat16 conversion unchanged."""
    f32 = np.ascontiguousarray(np.asarray(x, dtype=np.float32))
    return bool(np.all((f32.view(np.uint32) & np.uint32(0xFFFF)) == 0))

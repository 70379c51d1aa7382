"""
Sort keys: 64-bit unsigned integers ordered by their unsigned value.

Floats are mapped to the same integer space with the usual total-order
transform (flip the sign bit of non-negatives, flip every bit of negatives),
so one partitioning core serves both element types. -0.0 orders strictly
below +0.0 in encoded form.
"""
import struct
from typing import Union

import numpy as np
import numpy.typing as npt

from app.services.exceptions import NaNKeyError

Key = int
KeyArray = npt.NDArray[np.uint64]

SIGN_BIT = 1 << 63
KEY_MASK = (1 << 64) - 1
_SIGN_BIT_U64 = np.uint64(SIGN_BIT)


def encode_float(x: float) -> Key:
    """Map a float to its order-preserving 64-bit key."""
    if x != x:
        raise NaNKeyError(0)
    bits = struct.unpack("<Q", struct.pack("<d", x))[0]
    if bits & SIGN_BIT:
        return (~bits) & KEY_MASK
    return bits | SIGN_BIT


def decode_float(k: Key) -> float:
    """Exact inverse of encode_float."""
    if k & SIGN_BIT:
        bits = k ^ SIGN_BIT
    else:
        bits = (~k) & KEY_MASK
    return struct.unpack("<d", struct.pack("<Q", bits))[0]


def encode_floats(values: npt.ArrayLike) -> KeyArray:
    """Vectorized encode_float. Raises NaNKeyError on the first NaN."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    nan_mask = np.isnan(arr)
    if nan_mask.any():
        raise NaNKeyError(int(np.argmax(nan_mask)))
    bits = arr.view(np.uint64)
    negative = (bits & _SIGN_BIT_U64) != 0
    return np.where(negative, ~bits, bits | _SIGN_BIT_U64)


def decode_floats(keys: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """Vectorized decode_float."""
    k = np.ascontiguousarray(keys, dtype=np.uint64)
    positive = (k & _SIGN_BIT_U64) != 0
    bits = np.where(positive, k ^ _SIGN_BIT_U64, ~k)
    return bits.view(np.float64)


def as_keys(values: Union[npt.ArrayLike, KeyArray]) -> KeyArray:
    """Coerce input to a contiguous uint64 key array, encoding floats on the way."""
    arr = np.asarray(values)
    if arr.dtype.kind == "f":
        return encode_floats(arr)
    if arr.dtype.kind == "i" and arr.size and int(arr.min()) < 0:
        raise ValueError("signed integers with negative values are not keys; encode them first")
    return np.ascontiguousarray(arr, dtype=np.uint64)

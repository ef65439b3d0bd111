import hashlib
import math
import demjson3
import numpy as np
from typing import Any

def to_signed(value: np.ndarray | int, bits: int) -> np.ndarray | int:
    """Interprets unsigned integers as two's complement values.

    Args:
        value: The integer or integer array to convert.
        bits: Width of the two's complement representation.

    Returns:
        The signed value(s), same container type as the input.
    """
    half = 1 << (bits - 1)
    full = 1 << bits
    if isinstance(value, np.ndarray):
        value = value.astype(np.int64)
        return np.where(value >= half, value - full, value)
    return value - full if value >= half else value

def to_unsigned(value: np.ndarray, bits: int) -> np.ndarray:
    """Inverse of to_signed: wraps signed values into the unsigned range."""
    return np.asarray(value, dtype=np.int64) & ((1 << bits) - 1)

def str_to_json(value: str) -> Any:
    """Parses a JSON-like string using demjson3 for tolerant decoding.

    Accepts comments, unquoted keys and trailing commas, which keeps
    hand-written config files and truth sidecars readable.

    Args:
        value: JSON-like string to parse.

    Returns:
        The decoded Python value.
    """
    return demjson3.decode(value)

def round_half_up(value: float) -> int:
    """Rounds to the nearest integer, halves away from -inf."""
    return int(math.floor(value + 0.5))

def sha256_hex(data: bytes) -> str:
    """Lower-case hex SHA-256 digest of a byte string."""
    return hashlib.sha256(data).hexdigest()

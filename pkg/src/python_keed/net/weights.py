"""Self-describing weight container.

Layout (little-endian): ``KEED1``, u32 config length, config JSON, u32 tensor
count, then per tensor u16 name length, name, u8 ndim, u32 dims, float64 data.
"""

import json
import struct
from typing import Tuple

import numpy as np

from python_keed.config import read_section
from python_keed.errors import ConfigError, DataError
from python_keed.net.model import ModelConfig, Parameters, parameter_shapes
from python_keed.utils import str_to_json

MAGIC = b"KEED1"


def save_weights(params: Parameters, cfg: ModelConfig) -> bytes:
    if not params.all_finite():
        raise DataError("Refusing to save non-finite parameters")
    config = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    chunks = [MAGIC, struct.pack("<I", len(config)), config, struct.pack("<I", len(params))]
    for name, tensor in params.items():
        encoded = name.encode()
        chunks.append(struct.pack("<H", len(encoded)) + encoded)
        chunks.append(struct.pack(f"<B{tensor.ndim}I", tensor.ndim, *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise DataError(f"Truncated weight file at byte {self.offset} (need {n} more)")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_weights(data: bytes) -> Tuple[Parameters, ModelConfig]:
    reader = _Reader(bytes(data))
    if reader.take(len(MAGIC)) != MAGIC:
        raise DataError("Not a weight file: bad magic")
    (config_len,) = reader.unpack("<I")
    try:
        cfg = read_section(ModelConfig, str_to_json(reader.take(config_len).decode()))
    except (ConfigError, UnicodeDecodeError) as err:
        raise DataError(f"Weight file carries an invalid model config: {err}") from err
    except Exception as err:
        raise DataError(f"Weight file config does not parse: {err}") from err
    expected = parameter_shapes(cfg)
    (count,) = reader.unpack("<I")
    if count != len(expected):
        raise DataError(f"Weight file holds {count} tensors, config needs {len(expected)}")
    tensors = {}
    for expected_name, expected_shape in expected.items():
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode()
        if name != expected_name:
            raise DataError(f"Unexpected tensor {name!r}, expected {expected_name!r}")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I")
        if tuple(shape) != expected_shape:
            raise DataError(f"Tensor {name!r} has shape {tuple(shape)}, config needs {expected_shape}")
        n_bytes = 8 * int(np.prod(shape))
        tensors[name] = np.frombuffer(reader.take(n_bytes), dtype="<f8").astype(np.float64).reshape(shape)
    if reader.offset != len(reader.data):
        raise DataError(f"{len(reader.data) - reader.offset} trailing bytes after the last tensor")
    return Parameters(tensors), cfg

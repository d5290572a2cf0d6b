"""Writer/reader for the engine's bundle container (its published interface).

Layout, little-endian throughout: magic "DEVO", u32 version (1), u32 header
length, UTF-8 JSON config document, then per tensor a u16-length-prefixed
name, u8 rank, u32 dims, and the raw float32 payload in C order. The JSON
header is serialized with sorted keys and no whitespace so exports are
byte-stable.
"""

from __future__ import annotations

import json
import struct
from typing import Dict, Tuple

import numpy as np

MAGIC = b"DEVO"
FORMAT_VERSION = 1


class BundleFormatError(Exception):
    pass


def write_bundle_file(path, config: dict, tensors: Dict[str, np.ndarray]) -> None:
    header = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for name, tensor in tensors.items():
            tensor = np.ascontiguousarray(tensor, dtype="<f4")
            if not np.all(np.isfinite(tensor)):
                raise BundleFormatError(f"tensor {name!r} contains non-finite values")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(tensor.tobytes())


def read_bundle_file(path) -> Tuple[dict, Dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise BundleFormatError(f"{path}: bad magic")
    version, header_len = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise BundleFormatError(f"{path}: unsupported version {version}")
    pos = 12
    config = json.loads(data[pos:pos + header_len].decode("utf-8"))
    pos += header_len
    tensors: Dict[str, np.ndarray] = {}
    while pos < len(data):
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        tensors[name] = np.frombuffer(data, dtype="<f4", count=count,
                                      offset=pos).reshape(shape).copy()
        pos += 4 * count
    return config, tensors

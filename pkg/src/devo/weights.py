"""Bit-exact weight-bundle container: magic 'DEVO', embedded config, raw float32 tensors.

Layout (all integers little-endian):

    magic   4 bytes  b"DEVO"
    u32     format version (currently 1)
    u32     header length
    bytes   UTF-8 JSON model-config document
    then per tensor:
      u16   name length, followed by the UTF-8 name
      u8    rank
      u32   one per dimension
      raw   float32 payload, C order

A model is one artifact: the config rides inside the file so weights and
topology cannot drift apart. No compression, float32 only.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .errors import (
    BadMagicError,
    BundleFormatError,
    DuplicateTensorError,
    NonFiniteTensorError,
    TruncatedBundleError,
    UnsupportedVersionError,
)

MAGIC = b"DEVO"
FORMAT_VERSION = 1


@dataclass
class WeightBundle:
    """An ordered set of named float32 tensors plus the model-config document."""

    config: dict
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def add(self, name: str, data) -> None:
        if name in self.tensors:
            raise DuplicateTensorError(f"tensor {name!r} already present")
        self.tensors[name] = np.ascontiguousarray(data, dtype=np.float32)

    def parameter_count(self) -> int:
        return sum(int(t.size) for t in self.tensors.values())


def _check_finite(bundle: WeightBundle) -> None:
    for name, tensor in bundle.tensors.items():
        if not np.all(np.isfinite(tensor)):
            raise NonFiniteTensorError(f"tensor {name!r} contains NaN or infinite values")


def save_bundle(bundle: WeightBundle, path) -> None:
    """Serialize deterministically; two saves of one bundle are byte-identical."""
    _check_finite(bundle)
    header = json.dumps(bundle.config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", bundle.version, len(header)))
        fh.write(header)
        for name, tensor in bundle.tensors.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedBundleError(f"truncated payload while reading {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.data)


def load_bundle(path) -> WeightBundle:
    """Parse a bundle file, raising a distinct error per corruption class."""
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise BadMagicError(f"{path}: bad magic, not a DEVO bundle")
    version, header_len = struct.unpack("<II", r.take(8, "version/header length"))
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: format version {version}, reader supports {FORMAT_VERSION}")
    header = r.take(header_len, "config document")
    try:
        config = json.loads(header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleFormatError(f"{path}: config document is not valid UTF-8 JSON: {exc}") from exc

    bundle = WeightBundle(config=config, version=version)
    while not r.exhausted:
        (name_len,) = struct.unpack("<H", r.take(2, "tensor name length"))
        name = r.take(name_len, "tensor name").decode("utf-8")
        (rank,) = struct.unpack("<B", r.take(1, "tensor rank"))
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank, "tensor dims"))
        count = 1
        for dim in shape:
            count *= dim
        raw = r.take(4 * count, f"tensor {name!r} payload")
        tensor = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
        if name in bundle.tensors:
            raise DuplicateTensorError(f"{path}: duplicate tensor name {name!r}")
        if not np.all(np.isfinite(tensor)):
            raise NonFiniteTensorError(f"{path}: tensor {name!r} contains NaN or infinite values")
        bundle.tensors[name] = tensor
    return bundle


def validate_bundle(bundle: WeightBundle, config) -> List[str]:
    """Compare bundle tensors against config expectations; return every mismatch.

    `config` must provide expected_tensor_shapes() -> {name: shape tuple}.
    An empty report means build_model will accept the pair.
    """
    expected = config.expected_tensor_shapes()
    reports = []
    for name, shape in expected.items():
        if name not in bundle.tensors:
            reports.append(f"missing tensor {name!r} (expected shape {tuple(shape)})")
        elif bundle.tensors[name].shape != tuple(shape):
            reports.append(
                f"tensor {name!r} has shape {bundle.tensors[name].shape}, expected {tuple(shape)}"
            )
    for name in bundle.tensors:
        if name not in expected:
            reports.append(f"unexpected extra tensor {name!r}")
    return reports

"""BLW1 weight files and the in-memory tensor store.

Wire format, little-endian, no padding or compression:

    magic "BLW1"
    u32  tensor count
    per tensor:
        u16  name length
        ...  UTF-8 name
        u8   ndim
        u32  dims[ndim]
        f32  values[prod(dims)]

Convolution kernels are stored as (out, in, 3, 3) under "<layer>.kernel"
with a matching "<layer>.bias" of shape (out,).  Tensors load as float64
(exact widening from f32) and write back as f32, so a write/load round
trip is bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"BLW1"


class WeightFormatError(Exception):
    """Base class for BLW1 decoding failures."""


class BadMagicError(WeightFormatError):
    pass


class VersionMismatchError(WeightFormatError):
    pass


class TruncatedFileError(WeightFormatError):
    pass


class DuplicateTensorError(WeightFormatError):
    pass


@dataclass
class WeightStore:
    """Named tensors; insertion order is preserved and serialized as-is."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.tensors:
            raise DuplicateTensorError(f"duplicate tensor name {name!r}")
        self.tensors[name] = np.asarray(value, dtype=np.float64)


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"{self.path!r}: truncated payload (need {n} bytes at offset "
                f"{self.pos}, have {len(self.data) - self.pos})"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_weights(path) -> WeightStore:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise WeightFormatError(f"cannot read weight file {path!r}: {exc}") from exc
    return decode_weights(raw, str(path))


def decode_weights(raw: bytes, path: str = "<bytes>") -> WeightStore:
    r = _Reader(raw, path)
    magic = r.take(4)
    if magic != MAGIC:
        if magic[:3] == MAGIC[:3]:
            raise VersionMismatchError(
                f"{path!r}: weight format version {magic[3:]!r} unsupported (expect '1')"
            )
        raise BadMagicError(f"{path!r}: bad magic {magic!r} (expect {MAGIC!r})")
    count = r.u32()
    store = WeightStore()
    for _ in range(count):
        name_len = r.u16()
        name = r.take(name_len).decode("utf-8")
        ndim = r.u8()
        dims = tuple(r.u32() for _ in range(ndim))
        n_values = int(np.prod(dims, dtype=np.int64)) if dims else 1
        payload = r.take(4 * n_values)
        values = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
        if name in store:
            raise DuplicateTensorError(f"{path!r}: duplicate tensor name {name!r}")
        store.add(name, values)
    return store


def encode_weights(store: WeightStore) -> bytes:
    out = bytearray(MAGIC)
    out += struct.pack("<I", len(store.tensors))
    for name, tensor in store.tensors.items():
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<B", tensor.ndim)
        for d in tensor.shape:
            out += struct.pack("<I", d)
        out += np.ascontiguousarray(tensor, dtype="<f4").tobytes()
    return bytes(out)


def write_weights(store: WeightStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_weights(store))

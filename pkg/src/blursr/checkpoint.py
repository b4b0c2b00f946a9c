"""Named parameter sets, a bit-exact checkpoint format, and weight algebra.

File layout (all integers little-endian):

    magic "PBSR" | u32 version=1 | u32 entry count
    per entry: u16 name length | name UTF-8 | u8 dtype tag (0 = f32)
               | u8 rank | rank x u32 extents | raw f32 payload
    metadata:  u32 pair count | per pair: u16 key len | key | u32 value len | value

Dot products, norms and cosines accumulate in float64; parameter counts
make float32 accumulation lossy.
"""

from __future__ import annotations

import struct
import zlib
from typing import Iterator, Mapping, Optional

import numpy as np

from .autograd import Tensor
from .errors import DegenerateInputError, FormatError, InvalidArgumentError

MAGIC = b"PBSR"
VERSION = 1
DTYPE_F32 = 0

__all__ = [
    "ParamSet",
    "save",
    "load",
    "flatten",
    "dot",
    "norm",
    "cosine_similarity",
    "interpolate",
    "checksum",
]


class ParamSet:
    """Ordered name -> Tensor map; iteration is lexicographic by name."""

    def __init__(self, entries: Optional[Mapping[str, Tensor]] = None,
                 metadata: Optional[Mapping[str, str]] = None):
        self._entries: dict[str, Tensor] = {}
        self.metadata: dict[str, str] = dict(metadata or {})
        if entries:
            for name, t in entries.items():
                self.add(name, t)

    def add(self, name: str, t: Tensor) -> None:
        if name in self._entries:
            raise InvalidArgumentError(f"duplicate parameter name {name!r}")
        if not isinstance(t, Tensor):
            raise InvalidArgumentError(f"parameter {name!r} must be a Tensor")
        self._entries[name] = t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return sorted(self._entries)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in self.names():
            yield name, self._entries[name]

    def tensors(self) -> Iterator[Tensor]:
        for _, t in self.items():
            yield t

    def total_parameters(self) -> int:
        return sum(t.size for t in self._entries.values())

    def aligned_with(self, other: "ParamSet") -> bool:
        if self.names() != other.names():
            return False
        return all(self._entries[n].shape == other._entries[n].shape for n in self._entries)

    def set_requires_grad(self, flag: bool) -> None:
        for t in self._entries.values():
            t.requires_grad = bool(flag)

    def zero_grad(self) -> None:
        for t in self._entries.values():
            t.grad = None

    def copy(self) -> "ParamSet":
        out = ParamSet(metadata=self.metadata)
        for name, t in self._entries.items():
            out.add(name, Tensor(t.data.copy(), requires_grad=t.requires_grad))
        return out

    def __repr__(self) -> str:
        return f"ParamSet({len(self)} tensors, {self.total_parameters()} parameters)"


def _require_aligned(a: ParamSet, b: ParamSet, op: str) -> None:
    if not a.aligned_with(b):
        raise InvalidArgumentError(f"{op} requires aligned ParamSets (same names and shapes)")


def flatten(params: ParamSet) -> np.ndarray:
    """All parameters as one float32 vector, lexicographic by name."""
    parts = [t.data.reshape(-1) for _, t in params.items()]
    if not parts:
        return np.zeros(0, dtype=np.float32)
    return np.concatenate(parts).astype(np.float32, copy=False)


def dot(a: ParamSet, b: ParamSet) -> float:
    _require_aligned(a, b, "dot")
    return float(np.dot(flatten(a).astype(np.float64), flatten(b).astype(np.float64)))


def norm(a: ParamSet) -> float:
    v = flatten(a).astype(np.float64)
    return float(np.sqrt(np.dot(v, v)))


def cosine_similarity(a: ParamSet, b: ParamSet) -> float:
    _require_aligned(a, b, "cosine_similarity")
    na, nb = norm(a), norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine_similarity of zero-norm ParamSet")
    return dot(a, b) / (na * nb)


def checksum(params: ParamSet) -> str:
    """crc32 over the flattened payload; used for provenance metadata."""
    return format(zlib.crc32(flatten(params).tobytes()) & 0xFFFFFFFF, "08x")


def interpolate(a: ParamSet, b: ParamSet, lam: float) -> ParamSet:
    """Per-coordinate lam*a + (1-lam)*b; metadata records both parents."""
    _require_aligned(a, b, "interpolate")
    if not 0.0 <= lam <= 1.0:
        raise InvalidArgumentError(f"lambda must lie in [0,1], got {lam}")
    w = np.float32(lam)
    cw = np.float32(1.0 - lam)
    meta = dict(a.metadata)
    meta.update({
        "interp.lambda": repr(float(lam)),
        "interp.parent_a": checksum(a),
        "interp.parent_b": checksum(b),
    })
    out = ParamSet(metadata=meta)
    for name, ta in a.items():
        tb = b[name]
        out.add(name, Tensor(w * ta.data + cw * tb.data))
    return out


# ---------------------------------------------------------------------------
# serialization


def _dump(params: ParamSet) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, t in params.items():
        nb = name.encode("utf-8")
        if len(nb) > 0xFFFF:
            raise InvalidArgumentError(f"parameter name too long: {name!r}")
        if t.data.dtype != np.float32:
            raise InvalidArgumentError(f"checkpoint stores float32 tensors only, {name!r} is {t.data.dtype}")
        shape = t.shape
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<BB", DTYPE_F32, len(shape)))
        chunks.append(struct.pack(f"<{len(shape)}I", *shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    meta = params.metadata
    chunks.append(struct.pack("<I", len(meta)))
    for key in sorted(meta):
        kb = key.encode("utf-8")
        vb = meta[key].encode("utf-8")
        chunks.append(struct.pack("<H", len(kb)))
        chunks.append(kb)
        chunks.append(struct.pack("<I", len(vb)))
        chunks.append(vb)
    return b"".join(chunks)


def save(params: ParamSet, path) -> None:
    with open(path, "wb") as f:
        f.write(_dump(params))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated checkpoint while reading {what}", offset=self.pos)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load(path) -> ParamSet:
    with open(path, "rb") as f:
        buf = f.read()
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic, not a checkpoint file", offset=0)
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    count = r.u32("entry count")
    out = ParamSet()
    for i in range(count):
        name_len = r.u16(f"entry {i} name length")
        name = r.take(name_len, f"entry {i} name").decode("utf-8")
        tag = r.u8(f"entry {i} dtype tag")
        if tag != DTYPE_F32:
            raise FormatError(f"unknown dtype tag {tag} for {name!r}", offset=r.pos - 1)
        rank = r.u8(f"entry {i} rank")
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank, f"entry {i} extents"))
        n_elem = int(np.prod(shape, dtype=np.int64)) if rank else 1
        payload = r.take(4 * n_elem, f"entry {i} payload for {name!r}")
        data = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
        out.add(name, Tensor(data))
    n_meta = r.u32("metadata count")
    for i in range(n_meta):
        klen = r.u16(f"metadata key {i} length")
        key = r.take(klen, f"metadata key {i}").decode("utf-8")
        vlen = r.u32(f"metadata value {i} length")
        out.metadata[key] = r.take(vlen, f"metadata value {i}").decode("utf-8")
    if r.pos != len(buf):
        raise FormatError("trailing bytes after checkpoint payload", offset=r.pos)
    return out

"""Dense-vector records, the NTEB binary store format, and vector math.

NTEB version 1 layout (little-endian throughout, no padding):

    magic "NTEB" | u32 version=1 | u32 dimension | u64 record count
    | u16 model_tag length | model_tag UTF-8 bytes
    then per record:
    | u16 id length | id UTF-8 bytes | dimension x f32 components
"""

from __future__ import annotations

import io
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptionError, DegenerateVectorError, DimensionError, FormatError

MAGIC = b"NTEB"
VERSION = 1

_HEADER = struct.Struct("<4sIIQ")
_U16 = struct.Struct("<H")


@dataclass
class EmbeddingRecord:
    """One id plus its float32 vector."""

    id: str
    vector: np.ndarray

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float32)
        if self.vector.ndim != 1:
            raise FormatError(f"record {self.id!r}: vector must be one-dimensional")
        if not np.all(np.isfinite(self.vector)):
            raise FormatError(f"record {self.id!r}: vector has non-finite components")

    def __eq__(self, other):
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return self.id == other.id and self.vector.tobytes() == other.vector.tobytes()


@dataclass
class EmbeddingStore:
    """Ordered id -> vector mapping with a declared dimension and a tag naming the model."""

    dimension: int
    records: list[EmbeddingRecord] = field(default_factory=list)
    model_tag: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.dimension <= 0:
            raise FormatError(f"dimension must be positive, got {self.dimension}")
        seen = set()
        for rec in self.records:
            if rec.vector.shape[0] != self.dimension:
                raise DimensionError(
                    f"record {rec.id!r} has length {rec.vector.shape[0]}, store dimension is {self.dimension}"
                )
            if rec.id in seen:
                raise FormatError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and self.model_tag == other.model_tag
            and self.records == other.records
        )

    def ids(self) -> list[str]:
        return [rec.id for rec in self.records]


def _encode_str(text: str, what: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise FormatError(f"{what} exceeds 65535 UTF-8 bytes")
    return _U16.pack(len(raw)) + raw


def write_store(store: EmbeddingStore, sink) -> int:
    """Serialize `store` to a binary sink or path. Returns bytes written.

    Identical stores produce identical bytes.
    """
    store.validate()
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            return write_store(store, fh)

    written = 0
    written += sink.write(_HEADER.pack(MAGIC, VERSION, store.dimension, len(store.records)))
    written += sink.write(_encode_str(store.model_tag, "model_tag"))
    for rec in store.records:
        written += sink.write(_encode_str(rec.id, f"record id {rec.id!r}"))
        written += sink.write(rec.vector.tobytes())
    return written


def _read_exact(source, count: int, offset: int, what: str) -> bytes:
    data = source.read(count)
    if len(data) != count:
        raise CorruptionError(f"truncated while reading {what}", offset + len(data))
    return data


def read_store(source) -> EmbeddingStore:
    """Parse an NTEB payload from a binary source or path."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return read_store(fh)

    offset = 0
    header = _read_exact(source, _HEADER.size, offset, "header")
    magic, version, dimension, count = _HEADER.unpack(header)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}, expected {VERSION}")
    if dimension == 0:
        raise FormatError("dimension must be positive")
    offset += _HEADER.size

    def read_prefixed(what: str) -> bytes:
        nonlocal offset
        raw_len = _read_exact(source, _U16.size, offset, f"{what} length")
        offset += _U16.size
        (length,) = _U16.unpack(raw_len)
        data = _read_exact(source, length, offset, what)
        offset += length
        return data

    model_tag = read_prefixed("model_tag").decode("utf-8")
    vec_bytes = dimension * 4
    records = []
    for i in range(count):
        rec_id = read_prefixed(f"record {i} id").decode("utf-8")
        raw = _read_exact(source, vec_bytes, offset, f"record {i} ({rec_id!r}) vector")
        offset += vec_bytes
        vector = np.frombuffer(raw, dtype="<f4").copy()
        if not np.all(np.isfinite(vector)):
            raise FormatError(f"record {rec_id!r}: vector has non-finite components")
        records.append(EmbeddingRecord(rec_id, vector))

    trailing = source.read(1)
    if trailing:
        raise FormatError(f"{len(trailing)}+ trailing bytes after {count} records")
    return EmbeddingStore(dimension=dimension, records=records, model_tag=model_tag)


def store_to_bytes(store: EmbeddingStore) -> bytes:
    buf = io.BytesIO()
    write_store(store, buf)
    return buf.getvalue()


def unit_normalize(vector) -> np.ndarray:
    """Scale to Euclidean norm 1 (float64). All-zero input is degenerate.

    Components are divided by the largest magnitude first, so denormal-tiny
    and huge vectors normalize instead of under- or overflowing the squared
    norm.
    """
    v = np.asarray(vector, dtype=np.float64).ravel()
    peak = float(np.max(np.abs(v))) if v.size else 0.0
    if peak == 0.0 or not math.isfinite(peak):
        raise DegenerateVectorError("cannot normalize a zero or non-finite vector")
    scaled = v / peak
    norm = math.sqrt(float(np.dot(scaled, scaled)))
    return scaled / norm


def cosine_similarity(a, b) -> float:
    """dot(a, b) / (|a| |b|), computed in float64 as a dot of unit vectors."""
    va = np.asarray(a, dtype=np.float64).ravel()
    vb = np.asarray(b, dtype=np.float64).ravel()
    if va.shape[0] != vb.shape[0]:
        raise DimensionError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    return float(np.dot(unit_normalize(va), unit_normalize(vb)))

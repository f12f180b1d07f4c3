"""Writer for the NTEB binary embedding store.

Layout, all integers little-endian:

    magic "NTEB" | u32 version=1 | u32 dimension | u64 record count
    | u16 model-tag byte length | model-tag UTF-8
    | per record: u16 id byte length | id UTF-8 | dimension x f32

The consuming side owns the reader; this module only has to produce files
that its validation accepts, so every constraint is checked before a byte
is written.
"""

import os
import struct
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ExportError

MAGIC = b"NTEB"
VERSION = 1


def _encoded(label: str, text: str) -> bytes:
    data = text.encode("utf-8")
    if len(data) > 0xFFFF:
        raise ExportError(f"{label} exceeds 65535 UTF-8 bytes")
    return data


def write_nteb(
    path,
    dimension: int,
    ids: Sequence[str],
    vectors: np.ndarray,
    model_tag: str,
) -> int:
    """Write one store atomically; returns the byte count written."""
    if dimension < 1:
        raise ExportError(f"dimension must be >= 1, got {dimension}")
    matrix = np.asarray(vectors, dtype=np.float32)
    if matrix.ndim != 2 or matrix.shape != (len(ids), dimension):
        raise ExportError(
            f"expected a {len(ids)} x {dimension} vector matrix, got shape {matrix.shape}"
        )
    if not np.isfinite(matrix).all():
        raise ExportError("vectors contain non-finite components")
    if len(set(ids)) != len(ids):
        raise ExportError("record ids must be unique")

    tag = _encoded("model tag", model_tag)
    parts = [MAGIC, struct.pack("<II", VERSION, dimension), struct.pack("<Q", len(ids))]
    parts.append(struct.pack("<H", len(tag)))
    parts.append(tag)
    for record_id, row in zip(ids, matrix):
        if not record_id:
            raise ExportError("record ids must be non-empty")
        encoded = _encoded(f"id {record_id!r}", record_id)
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(row.astype("<f4").tobytes())
    payload = b"".join(parts)

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
    try:
        with os.fdopen(handle, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(temp_name, target)
    except BaseException:
        try:
            os.unlink(temp_name)
        except OSError:
            pass
        raise
    return len(payload)

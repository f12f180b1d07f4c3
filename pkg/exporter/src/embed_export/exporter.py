"""Batch sentence-embedding export.

The model is loaded once, texts are encoded in order, and the vectors land
in an NTEB file keyed by zero-based line numbers (or caller-supplied keys).
Identical input lines are encoded once and share one vector, which makes
the identical-text-identical-bits guarantee hold by construction instead of
depending on how the batching happens to pad.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ExportError
from .nteb import write_nteb

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "sentence-transformers/all-mpnet-base-v2"
DEFAULT_BATCH_SIZE = 32


@dataclass(frozen=True)
class ExportJob:
    input_path: str
    output_path: str
    model_id: str = DEFAULT_MODEL
    revision: str | None = None
    batch_size: int = DEFAULT_BATCH_SIZE
    keys: Sequence[str] | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ExportError(f"batch size must be >= 1, got {self.batch_size}")

    @property
    def model_tag(self) -> str:
        if self.revision:
            return f"{self.model_id}@{self.revision}"
        return self.model_id


@dataclass(frozen=True)
class ExportResult:
    count: int
    dimension: int
    model_tag: str
    bytes_written: int


def read_input_lines(path) -> list[str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh]
    except OSError as exc:
        raise ExportError(f"cannot read input: {exc}") from exc
    if not lines:
        raise ExportError(f"{path}: input is empty")
    return lines


def load_model(model_id: str, revision: str | None = None):
    from sentence_transformers import SentenceTransformer

    kwargs = {"revision": revision} if revision else {}
    try:
        return SentenceTransformer(model_id, **kwargs)
    except Exception as exc:
        raise ExportError(f"cannot load model {model_id!r}: {exc}") from exc


def export_embeddings(job: ExportJob, model=None) -> ExportResult:
    lines = read_input_lines(job.input_path)
    if job.keys is not None and len(job.keys) != len(lines):
        raise ExportError(
            f"{len(job.keys)} keys supplied for {len(lines)} input lines"
        )
    ids = list(job.keys) if job.keys is not None else [str(i) for i in range(len(lines))]

    if model is None:
        model = load_model(job.model_id, job.revision)

    unique = list(dict.fromkeys(lines))
    encoded = model.encode(
        unique,
        batch_size=job.batch_size,
        show_progress_bar=False,
        convert_to_numpy=True,
        normalize_embeddings=False,
    )
    encoded = np.asarray(encoded, dtype=np.float32)
    if encoded.ndim != 2 or encoded.shape[0] != len(unique):
        raise ExportError(f"model returned shape {encoded.shape} for {len(unique)} texts")
    by_text = {text: row for text, row in zip(unique, encoded)}
    matrix = np.stack([by_text[line] for line in lines])

    dimension = int(matrix.shape[1])
    written = write_nteb(job.output_path, dimension, ids, matrix, job.model_tag)
    logger.info(
        "exported %d vectors (%d unique texts), dimension %d, to %s",
        len(lines), len(unique), dimension, job.output_path,
    )
    return ExportResult(len(lines), dimension, job.model_tag, written)

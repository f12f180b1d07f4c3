"""Sentence-embedding export into the NTEB binary store format."""

__version__ = "0.1.0"

from .errors import ExportError
from .exporter import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_MODEL,
    ExportJob,
    ExportResult,
    export_embeddings,
    load_model,
    read_input_lines,
)
from .nteb import write_nteb

__all__ = [
    "DEFAULT_BATCH_SIZE",
    "DEFAULT_MODEL",
    "ExportError",
    "ExportJob",
    "ExportResult",
    "export_embeddings",
    "load_model",
    "read_input_lines",
    "write_nteb",
]

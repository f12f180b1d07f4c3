"""Embedding provider seam: precomputed stores or an external process.

The external protocol: one UTF-8 text per stdin line; the process answers
with a single NTEB stream on stdout whose record ids are the zero-based
line numbers. Providers advertise the protocol by including
PROVIDER_PROTOCOL_TAG in the NTEB model_tag.
"""

from __future__ import annotations

import subprocess
from typing import Protocol, Sequence

import numpy as np

from .errors import MissingTextError, ProviderError
from .store import EmbeddingStore, read_store
from .usda import normalize_query_title

PROVIDER_PROTOCOL_TAG = "nteb-provider/1"


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return one vector per text, stacked in input order."""
        ...


class PrecomputedProvider:
    """Text -> vector lookup backed by an NTEB store."""

    def __init__(self, mapping: dict[str, np.ndarray], dimension: int):
        self._mapping = mapping
        self.dimension = dimension

    @classmethod
    def from_store(cls, store: EmbeddingStore) -> "PrecomputedProvider":
        """Record ids are the (already normalized) texts themselves."""
        return cls({rec.id: rec.vector for rec in store.records}, store.dimension)

    @classmethod
    def from_store_and_titles(cls, store: EmbeddingStore, titles: Sequence[str]) -> "PrecomputedProvider":
        """Record ids are line numbers aligned with `titles`; lookup keys are
        the normalized titles. The first occurrence of a repeated title wins."""
        if len(titles) != len(store.records):
            raise ProviderError(
                f"store holds {len(store.records)} records but {len(titles)} titles were given"
            )
        by_id = {rec.id: rec.vector for rec in store.records}
        mapping: dict[str, np.ndarray] = {}
        for i, title in enumerate(titles):
            key = str(i)
            if key not in by_id:
                raise ProviderError(f"store is not line-keyed: missing record id {key!r}")
            normalized = normalize_query_title(title)
            mapping.setdefault(normalized, by_id[key])
        return cls(mapping, store.dimension)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        missing = [t for t in texts if t not in self._mapping]
        if missing:
            raise MissingTextError(missing)
        return np.stack([np.asarray(self._mapping[t], dtype=np.float64) for t in texts])


class ProcessProvider:
    """Runs an external provider process once per embed() call."""

    def __init__(self, argv: Sequence[str], timeout: float | None = None):
        if not argv:
            raise ProviderError("provider command is empty")
        self.argv = list(argv)
        self.timeout = timeout

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        for text in texts:
            if "\n" in text or "\r" in text:
                raise ProviderError(f"text {text!r} contains a line break; protocol is line-delimited")
        payload = ("".join(t + "\n" for t in texts)).encode("utf-8")
        try:
            proc = subprocess.run(
                self.argv,
                input=payload,
                capture_output=True,
                timeout=self.timeout,
            )
        except OSError as exc:
            raise ProviderError(f"cannot start provider {self.argv[0]!r}: {exc}") from exc
        except subprocess.TimeoutExpired as exc:
            raise ProviderError(f"provider {self.argv[0]!r} timed out") from exc
        if proc.returncode != 0:
            tail = proc.stderr.decode("utf-8", "replace").strip().splitlines()[-3:]
            raise ProviderError(
                f"provider exited with code {proc.returncode}: {' | '.join(tail) or 'no stderr'}"
            )
        import io

        store = read_store(io.BytesIO(proc.stdout))
        if PROVIDER_PROTOCOL_TAG not in store.model_tag:
            raise ProviderError(
                f"provider model_tag {store.model_tag!r} does not pin protocol {PROVIDER_PROTOCOL_TAG!r}"
            )
        if len(store.records) != len(texts):
            raise ProviderError(f"provider returned {len(store.records)} vectors for {len(texts)} texts")
        by_id = {rec.id: rec.vector for rec in store.records}
        try:
            rows = [by_id[str(i)] for i in range(len(texts))]
        except KeyError as exc:
            raise ProviderError(f"provider response is missing line id {exc.args[0]!r}") from None
        return np.stack([np.asarray(r, dtype=np.float64) for r in rows])

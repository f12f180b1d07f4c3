"""Exact top-n cosine retrieval over unit-normalized food vectors.

The index is a flat matrix scan: results are identical to a naive per-row
cosine pass, including the similarity >= t (inclusive) filter and the
(similarity desc, food_id asc) ordering. Nothing here approximates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConsistencyError,
    DegenerateVectorError,
    DimensionError,
    ParameterError,
)
from .store import EmbeddingStore, unit_normalize
from .usda import FoodDb


@dataclass(frozen=True)
class NeighborHit:
    food_id: str
    similarity: float


class Index:
    """Immutable row-major matrix of unit vectors with a parallel id list."""

    def __init__(self, ids: list[str], matrix: np.ndarray):
        self._ids = tuple(ids)
        self._matrix = matrix
        self._matrix.setflags(write=False)

    @property
    def dimension(self) -> int:
        return self._matrix.shape[1]

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def __len__(self) -> int:
        return len(self._ids)

    def similarities(self, query) -> np.ndarray:
        """Cosine similarity of `query` against every row, in row order."""
        q = np.asarray(query, dtype=np.float64).ravel()
        if q.shape[0] != self.dimension:
            raise DimensionError(f"query has dimension {q.shape[0]}, index has {self.dimension}")
        return self._matrix @ unit_normalize(q)

    def query_top_n(self, query, n: int, t: float) -> list[NeighborHit]:
        """At most n hits with similarity >= t, ordered by (similarity desc, id asc)."""
        if n < 1:
            raise ParameterError(f"n must be >= 1, got {n}")
        sims = self.similarities(query)
        eligible = np.flatnonzero(sims >= t)
        if eligible.size == 0:
            return []
        k = min(n, eligible.size)
        if eligible.size > k:
            chosen = sims[eligible]
            # k-th largest similarity; keep every tie at the boundary so the
            # id tie-break decides which of them make the cut
            boundary = np.partition(chosen, chosen.size - k)[chosen.size - k]
            eligible = eligible[chosen >= boundary]
        ids = self._ids
        ranked = sorted(eligible.tolist(), key=lambda i: (-sims[i], ids[i]))[:k]
        return [NeighborHit(ids[i], float(sims[i])) for i in ranked]


def build_index(store: EmbeddingStore, db: FoodDb) -> Index:
    """Unit-normalize the store's vectors in deterministic (id-sorted) row order.

    Every store id must exist in the food db; all-zero vectors are rejected.
    """
    store.validate()
    for rec in store.records:
        if rec.id not in db:
            raise ConsistencyError(f"store id {rec.id!r} is missing from the food db")
    ordered = sorted(store.records, key=lambda r: r.id)
    matrix = np.empty((len(ordered), store.dimension), dtype=np.float64)
    for row, rec in enumerate(ordered):
        try:
            matrix[row] = unit_normalize(rec.vector)
        except DegenerateVectorError:
            raise DegenerateVectorError(f"store id {rec.id!r} has an all-zero vector") from None
    return Index([rec.id for rec in ordered], matrix)

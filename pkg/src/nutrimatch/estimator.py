"""Title -> nutrient estimation: embed, retrieve neighbors, aggregate.

Aggregation runs per nutrient field over the neighbors that carry the field;
missing fields are excluded rather than zero-filled. Weighted-mean weights
are cosine similarities clamped to >= 0; if every weight clamps to zero the
field falls back to the plain mean of the surviving values.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from statistics import median
from typing import Sequence

from .errors import (
    AggregationError,
    ConsistencyError,
    MissingTextError,
    NutrimatchError,
    ParameterError,
    QueryError,
)
from .index import Index, NeighborHit
from .providers import EmbeddingProvider
from .usda import NUTRIENT_FIELDS, FoodDb, NutrientVector, normalize_query_title


class Aggregation(enum.Enum):
    MEAN = "mean"
    MEDIAN = "median"
    WEIGHTED_MEAN = "weighted_mean"


@dataclass(frozen=True)
class EstimatorConfig:
    n: int = 50
    t: float = 0.0
    m: Aggregation = Aggregation.WEIGHTED_MEAN

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"neighbor count n must be >= 1, got {self.n}")
        if not (-1.0 <= self.t <= 1.0):
            raise ParameterError(f"threshold t must lie in [-1, 1], got {self.t}")


@dataclass(frozen=True)
class NutrientEstimate:
    nutrients: NutrientVector
    support: int
    min_similarity: float
    max_similarity: float
    neighbor_ids: tuple[str, ...]


@dataclass(frozen=True)
class NoMatch:
    """No neighbor met the similarity threshold."""


@dataclass(frozen=True)
class ItemFailure:
    """Per-title failure inside a batch; the batch itself continues."""

    message: str


BatchResult = NutrientEstimate | NoMatch | ItemFailure


def _mean(values: list[float]) -> float:
    # fsum keeps the result invariant under permutation of the inputs
    return math.fsum(values) / len(values)


def aggregate(hits: Sequence[NeighborHit], db: FoodDb, m: Aggregation) -> NutrientVector:
    """Combine neighbor nutrients field-by-field with the chosen function."""
    if not hits:
        raise AggregationError("cannot aggregate an empty neighbor set")
    pairs = []
    for hit in hits:
        if hit.food_id not in db:
            raise ConsistencyError(f"hit id {hit.food_id!r} is missing from the food db")
        pairs.append((db.get(hit.food_id).nutrients, hit.similarity))

    out: dict[str, float] = {}
    for field_name in NUTRIENT_FIELDS:
        present = [(getattr(nv, field_name), sim) for nv, sim in pairs if getattr(nv, field_name) is not None]
        if not present:
            continue
        values = [v for v, _ in present]
        if m is Aggregation.MEAN:
            out[field_name] = _mean(values)
        elif m is Aggregation.MEDIAN:
            out[field_name] = float(median(values))
        else:
            weights = [max(0.0, sim) for _, sim in present]
            total = math.fsum(weights)
            if total == 0.0:
                out[field_name] = _mean(values)
            else:
                out[field_name] = math.fsum(w * v for (v, _), w in zip(present, weights)) / total
    return NutrientVector(**out)


def estimate_title(
    title: str,
    index: Index,
    db: FoodDb,
    provider: EmbeddingProvider,
    cfg: EstimatorConfig,
) -> NutrientEstimate | NoMatch:
    """Full single-title path; NoMatch exactly when retrieval comes back empty."""
    normalized = normalize_query_title(title)
    vector = provider.embed([normalized])[0]
    hits = index.query_top_n(vector, cfg.n, cfg.t)
    if not hits:
        return NoMatch()
    return _estimate_from_hits(hits, db, cfg.m)


def _estimate_from_hits(hits: Sequence[NeighborHit], db: FoodDb, m: Aggregation) -> NutrientEstimate:
    sims = [h.similarity for h in hits]
    return NutrientEstimate(
        nutrients=aggregate(hits, db, m),
        support=len(hits),
        min_similarity=min(sims),
        max_similarity=max(sims),
        neighbor_ids=tuple(h.food_id for h in hits),
    )


def estimate_batch(
    titles: Sequence[str],
    index: Index,
    db: FoodDb,
    provider: EmbeddingProvider,
    cfg: EstimatorConfig,
    workers: int = 1,
) -> list[tuple[str, BatchResult]]:
    """Estimate many titles; output order matches input order.

    Per-title problems (bad title, missing precomputed vector) become
    ItemFailure entries. A provider that cannot serve at all raises before
    any per-title work.
    """
    if not titles:
        raise ParameterError("batch requires at least one title")

    results: list[BatchResult | None] = [None] * len(titles)
    normalized: list[str | None] = [None] * len(titles)
    for i, title in enumerate(titles):
        try:
            normalized[i] = normalize_query_title(title)
        except QueryError as exc:
            results[i] = ItemFailure(str(exc))

    vectors = _embed_tolerant(provider, normalized, results)

    def handle(i: int):
        if results[i] is not None or vectors[i] is None:
            return
        try:
            hits = index.query_top_n(vectors[i], cfg.n, cfg.t)
            results[i] = NoMatch() if not hits else _estimate_from_hits(hits, db, cfg.m)
        except NutrimatchError as exc:
            results[i] = ItemFailure(str(exc))

    indices = [i for i in range(len(titles)) if results[i] is None]
    if workers > 1 and len(indices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(handle, indices))
    else:
        for i in indices:
            handle(i)

    out = []
    for title, result in zip(titles, results):
        assert result is not None
        out.append((title, result))
    return out


def _embed_tolerant(provider, normalized, results):
    """Embed all pending texts at once; map missing-text errors onto items."""
    vectors: list = [None] * len(normalized)
    pending = [i for i, text in enumerate(normalized) if text is not None and results[i] is None]
    texts = [normalized[i] for i in pending]
    if not texts:
        return vectors
    try:
        stacked = provider.embed(texts)
    except MissingTextError as exc:
        missing = set(exc.missing)
        retry = [i for i in pending if normalized[i] not in missing]
        for i in pending:
            if normalized[i] in missing:
                results[i] = ItemFailure(f"no precomputed embedding for {normalized[i]!r}")
        if retry:
            stacked = provider.embed([normalized[i] for i in retry])
            for row, i in enumerate(retry):
                vectors[i] = stacked[row]
        return vectors
    for row, i in enumerate(pending):
        vectors[i] = stacked[row]
    return vectors

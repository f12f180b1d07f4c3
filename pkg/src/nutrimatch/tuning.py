"""Hyperparameter tuning: split, grid search over (n, t, m), RMSE scoring.

The grid reuses one embedding-plus-retrieval pass per title: a master
neighbor list fetched with the grid's largest n and smallest t is sliced
per config, which is exact because the threshold filter always removes a
suffix of the similarity-ranked list.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

from .errors import (
    DatasetError,
    EvaluationError,
    MissingTextError,
    ParameterError,
    QueryError,
)
from .estimator import Aggregation, EstimatorConfig, aggregate
from .index import Index, NeighborHit
from .providers import EmbeddingProvider
from .usda import FoodDb, normalize_query_title

logger = logging.getLogger(__name__)

_M_ORDER = {Aggregation.MEAN: 0, Aggregation.MEDIAN: 1, Aggregation.WEIGHTED_MEAN: 2}


@dataclass(frozen=True)
class LabeledRecipe:
    title: str
    true_calories: float

    def __post_init__(self):
        if not self.title:
            raise DatasetError("recipe title must be non-empty")
        if not math.isfinite(self.true_calories) or self.true_calories < 0:
            raise DatasetError(f"true_calories must be finite and >= 0, got {self.true_calories}")


@dataclass(frozen=True)
class TuningResult:
    config: EstimatorConfig
    train_rmse: float | None  # None when coverage is zero
    coverage: float


@dataclass(frozen=True)
class GridSpec:
    ns: tuple[int, ...] = (1, 5, 10, 20, 25, 50, 75, 100)
    ts: tuple[float, ...] = (0.0, 0.5, 0.75, 0.9)
    ms: tuple[Aggregation, ...] = (Aggregation.MEAN, Aggregation.MEDIAN, Aggregation.WEIGHTED_MEAN)

    def __post_init__(self):
        if not (self.ns and self.ts and self.ms):
            raise ParameterError("grid must have at least one value per axis")

    def configs(self) -> list[EstimatorConfig]:
        return [EstimatorConfig(n, t, m) for n in self.ns for t in self.ts for m in self.ms]


DEFAULT_GRID = GridSpec()


def split_dataset(
    recipes: Sequence[LabeledRecipe], train_fraction: float, seed: int
) -> tuple[list[LabeledRecipe], list[LabeledRecipe]]:
    """Seeded shuffle then cut; train size = floor(fraction * N)."""
    if not recipes:
        raise DatasetError("cannot split an empty dataset")
    if not (0.0 < train_fraction <= 1.0):
        raise ParameterError(f"train_fraction must be in (0, 1], got {train_fraction}")
    order = list(range(len(recipes)))
    random.Random(seed).shuffle(order)
    # epsilon absorbs binary-representation error in fraction * N (e.g. 0.7 * 10)
    cut = math.floor(train_fraction * len(recipes) + 1e-9)
    train = [recipes[i] for i in order[:cut]]
    test = [recipes[i] for i in order[cut:]]
    return train, test


def rmse(predicted: Sequence[float], actual: Sequence[float]) -> float:
    if len(predicted) != len(actual):
        raise ParameterError(f"length mismatch: {len(predicted)} predictions vs {len(actual)} actuals")
    if not predicted:
        raise ParameterError("rmse requires at least one pair")
    return math.sqrt(math.fsum((p - a) ** 2 for p, a in zip(predicted, actual)) / len(predicted))


def dataset_stats(recipes: Sequence[LabeledRecipe]) -> tuple[float, float]:
    """Mean and population standard deviation of true calories."""
    if not recipes:
        raise DatasetError("cannot compute stats of an empty dataset")
    values = [r.true_calories for r in recipes]
    mean = math.fsum(values) / len(values)
    variance = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(variance)


class EstimationContext:
    """Bundles index, db, and provider; caches one master retrieval per title."""

    def __init__(self, index: Index, db: FoodDb, provider: EmbeddingProvider):
        self.index = index
        self.db = db
        self.provider = provider

    def master_hits(
        self, titles: Sequence[str], n_cap: int, t_floor: float
    ) -> list[list[NeighborHit] | None]:
        """Top-n_cap hits at threshold t_floor per title; None when the title
        cannot be embedded (bad title or missing precomputed vector)."""
        out: list[list[NeighborHit] | None] = [None] * len(titles)
        normalized: list[str | None] = [None] * len(titles)
        for i, title in enumerate(titles):
            try:
                normalized[i] = normalize_query_title(title)
            except QueryError:
                logger.warning("title %r is empty after normalization; treated as uncovered", title)
        pending = [i for i in range(len(titles)) if normalized[i] is not None]
        texts = [normalized[i] for i in pending]
        if not texts:
            return out
        try:
            vectors = self.provider.embed(texts)
        except MissingTextError as exc:
            missing = set(exc.missing)
            logger.warning("%d title(s) lack precomputed embeddings; treated as uncovered", len(missing))
            pending = [i for i in pending if normalized[i] not in missing]
            vectors = self.provider.embed([normalized[i] for i in pending]) if pending else []
        for row, i in enumerate(pending):
            out[i] = self.index.query_top_n(vectors[row], n_cap, t_floor)
        return out


def slice_hits(master: Sequence[NeighborHit], n: int, t: float) -> list[NeighborHit]:
    """Derive a (n, t) result from a master list fetched with larger n / lower t."""
    return [h for h in master if h.similarity >= t][:n]


def _config_score(
    master: Sequence[list[NeighborHit] | None],
    recipes: Sequence[LabeledRecipe],
    cfg: EstimatorConfig,
    db: FoodDb,
) -> tuple[float | None, float]:
    predicted, actual = [], []
    for hits, recipe in zip(master, recipes):
        if hits is None:
            continue
        sliced = slice_hits(hits, cfg.n, cfg.t)
        if not sliced:
            continue
        estimate = aggregate(sliced, db, cfg.m)
        predicted.append(estimate.calories)
        actual.append(recipe.true_calories)
    coverage = len(predicted) / len(recipes)
    if not predicted:
        return None, 0.0
    return rmse(predicted, actual), coverage


def grid_search(
    train: Sequence[LabeledRecipe],
    grid: GridSpec,
    ctx: EstimationContext,
) -> list[TuningResult]:
    """Score every config on calories-RMSE over covered titles.

    Ranked ascending by train_rmse with ties broken by (smaller n, larger t,
    mean < median < weighted mean); zero-coverage configs trail unranked.
    """
    if not train:
        raise DatasetError("cannot tune on an empty training set")
    titles = [r.title for r in train]
    master = ctx.master_hits(titles, n_cap=max(grid.ns), t_floor=min(grid.ts))
    scored, uncovered = [], []
    for cfg in grid.configs():
        train_rmse, coverage = _config_score(master, train, cfg, ctx.db)
        result = TuningResult(cfg, train_rmse, coverage)
        (uncovered if train_rmse is None else scored).append(result)
    scored.sort(key=lambda r: (r.train_rmse, r.config.n, -r.config.t, _M_ORDER[r.config.m]))
    return scored + uncovered


def evaluate(
    config: EstimatorConfig,
    test: Sequence[LabeledRecipe],
    ctx: EstimationContext,
) -> tuple[float, float]:
    """(rmse, coverage) of one config on a held-out set; zero coverage errors."""
    if not test:
        raise DatasetError("cannot evaluate on an empty test set")
    master = ctx.master_hits([r.title for r in test], n_cap=config.n, t_floor=config.t)
    score, coverage = _config_score(master, test, config, ctx.db)
    if score is None:
        raise EvaluationError("no test title produced an estimate under this config")
    return score, coverage


class BaselineClient(Protocol):
    def calories_per_100g(self, title: str) -> float:
        """Query an external estimator for one title."""
        ...


class HttpBaselineClient:
    """Generic HTTPS GET baseline seam: title as query parameter, key from env."""

    def __init__(
        self,
        url: str,
        api_key_env: str = "BASELINE_API_KEY",
        query_param: str = "query",
        key_header: str = "X-Api-Key",
        extract=None,
        timeout: float = 10.0,
    ):
        self.url = url
        self.api_key_env = api_key_env
        self.query_param = query_param
        self.key_header = key_header
        self.extract = extract or _default_extract
        self.timeout = timeout

    def calories_per_100g(self, title: str) -> float:
        import requests

        key = os.environ.get(self.api_key_env, "")
        response = requests.get(
            self.url,
            params={self.query_param: title},
            headers={self.key_header: key} if key else {},
            timeout=self.timeout,
        )
        response.raise_for_status()
        return float(self.extract(response.json()))


def _default_extract(payload) -> float:
    """Pull a calories figure out of the common response shapes."""
    if isinstance(payload, (int, float)):
        return float(payload)
    if isinstance(payload, dict):
        if "calories" in payload:
            return float(payload["calories"])
        items = payload.get("items")
        if isinstance(items, list) and items and "calories" in items[0]:
            return float(items[0]["calories"])
    raise ValueError(f"cannot locate calories in baseline response: {payload!r}")


class DiskCachedClient:
    """Caches per-title responses so reruns stay offline; key = sha256(title)."""

    def __init__(self, inner: BaselineClient, cache_dir):
        self.inner = inner
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _path(self, title: str) -> Path:
        digest = hashlib.sha256(title.encode("utf-8")).hexdigest()
        return self.cache_dir / f"{digest}.json"

    def calories_per_100g(self, title: str) -> float:
        path = self._path(title)
        if path.is_file():
            return float(json.loads(path.read_text(encoding="utf-8"))["calories"])
        value = self.inner.calories_per_100g(title)
        path.write_text(json.dumps({"title": title, "calories": value}), encoding="utf-8")
        return value


def baseline_eval(
    client: BaselineClient,
    test: Sequence[LabeledRecipe],
    cache_dir=None,
) -> float:
    """RMSE of an external estimator on the test set; failures are excluded."""
    if not test:
        raise DatasetError("cannot evaluate a baseline on an empty test set")
    if cache_dir is not None:
        client = DiskCachedClient(client, cache_dir)
    predicted, actual, failures = [], [], 0
    for recipe in test:
        try:
            predicted.append(float(client.calories_per_100g(recipe.title)))
            actual.append(recipe.true_calories)
        except Exception as exc:
            failures += 1
            logger.warning("baseline failed for %r: %s", recipe.title, exc)
    if failures:
        logger.warning("baseline produced no value for %d of %d titles", failures, len(test))
    if not predicted:
        raise EvaluationError("baseline produced no successful responses")
    return rmse(predicted, actual)


def read_labeled_csv(source) -> list[LabeledRecipe]:
    """Load `title,calories_per_100g` rows."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8-sig", newline="") as fh:
            return read_labeled_csv(fh)
    reader = csv.DictReader(source)
    if reader.fieldnames is None:
        raise DatasetError("labeled dataset is empty")
    for column in ("title", "calories_per_100g"):
        if column not in reader.fieldnames:
            raise DatasetError(f"labeled dataset: missing column {column!r}")
    recipes = []
    for lineno, row in enumerate(reader, start=2):
        try:
            recipes.append(LabeledRecipe(row["title"], float(row["calories_per_100g"])))
        except (TypeError, ValueError) as exc:
            raise DatasetError(f"labeled dataset line {lineno}: {exc}") from exc
    if not recipes:
        raise DatasetError("labeled dataset holds no rows")
    return recipes


def write_tuning_report(
    results: Sequence[TuningResult],
    test_summary: tuple[EstimatorConfig, float, float] | None,
    sink,
) -> None:
    """CSV of all configs plus an optional trailing test-evaluation line."""
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            write_tuning_report(results, test_summary, fh)
            return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["n", "t", "m", "train_rmse", "coverage"])
    for result in results:
        cfg = result.config
        writer.writerow(
            [
                cfg.n,
                cfg.t,
                cfg.m.value,
                "" if result.train_rmse is None else result.train_rmse,
                result.coverage,
            ]
        )
    if test_summary is not None:
        cfg, score, coverage = test_summary
        sink.write(f"# test n={cfg.n} t={cfg.t} m={cfg.m.value} rmse={score} coverage={coverage}\n")

import numpy as np
import pytest

from nutrimatch.index import build_index
from nutrimatch.providers import PrecomputedProvider
from nutrimatch.store import EmbeddingRecord, EmbeddingStore
from nutrimatch.usda import FoodDb, FoodRecord, NutrientVector, Source


def one_hot(position: int, dimension: int = 8, scale: float = 1.0) -> np.ndarray:
    v = np.zeros(dimension, dtype=np.float32)
    v[position] = scale
    return v


FIXTURE_FOODS = [
    # id/name, basis vector position, calories, protein, fat, carbohydrates
    ("cheddar cheese", 0, 403.0, 24.9, 33.1, 1.3),
    ("grilled chicken", 1, 165.0, 31.0, 3.6, None),
    ("white rice", 2, 130.0, 2.7, 0.3, 28.2),
    ("tomato soup", 3, 33.0, 0.8, 0.7, 7.2),
    ("wheat bread", 4, 247.0, 13.0, 4.2, 41.0),
]


@pytest.fixture
def fixture_db() -> FoodDb:
    return FoodDb(
        FoodRecord(
            id=name,
            name=name,
            nutrients=NutrientVector(calories, protein, fat, carbs),
            source=Source.FOUNDATION,
        )
        for name, _, calories, protein, fat, carbs in FIXTURE_FOODS
    )


@pytest.fixture
def fixture_store() -> EmbeddingStore:
    records = [EmbeddingRecord(name, one_hot(pos)) for name, pos, *_ in FIXTURE_FOODS]
    return EmbeddingStore(dimension=8, records=records, model_tag="fixture/1")


@pytest.fixture
def fixture_index(fixture_store, fixture_db):
    return build_index(fixture_store, fixture_db)


def query_toward(weights: dict[str, float], dimension: int = 8) -> np.ndarray:
    """A query vector whose cosine against each one-hot food is proportional
    to the given weight."""
    positions = {name: pos for name, pos, *_ in FIXTURE_FOODS}
    q = np.zeros(dimension, dtype=np.float64)
    for name, w in weights.items():
        q[positions[name]] = w
    return q


def provider_for(titles_to_vectors: dict[str, np.ndarray], dimension: int = 8) -> PrecomputedProvider:
    return PrecomputedProvider({k: np.asarray(v) for k, v in titles_to_vectors.items()}, dimension)

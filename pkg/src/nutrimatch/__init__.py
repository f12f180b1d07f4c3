"""Text-to-nutrient estimation: embed a food title, retrieve the most
similar database foods by cosine similarity, aggregate their nutrients."""

__version__ = "0.1.0"

from .errors import NutrimatchError
from .estimator import Aggregation, EstimatorConfig, NoMatch, NutrientEstimate, estimate_batch, estimate_title
from .index import Index, NeighborHit, build_index
from .store import EmbeddingRecord, EmbeddingStore, cosine_similarity, read_store, unit_normalize, write_store
from .usda import FoodDb, FoodRecord, NutrientVector, Source, build_food_db, read_food_db, write_food_db

__all__ = [
    "Aggregation",
    "EmbeddingRecord",
    "EmbeddingStore",
    "EstimatorConfig",
    "FoodDb",
    "FoodRecord",
    "Index",
    "NeighborHit",
    "NoMatch",
    "NutrientEstimate",
    "NutrientVector",
    "NutrimatchError",
    "Source",
    "build_food_db",
    "build_index",
    "cosine_similarity",
    "estimate_batch",
    "estimate_title",
    "read_food_db",
    "read_store",
    "unit_normalize",
    "write_food_db",
    "write_store",
    "__version__",
]

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import one_hot, provider_for, query_toward
from nutrimatch.errors import (
    AggregationError,
    ConsistencyError,
    MissingTextError,
    ParameterError,
    ProviderError,
    QueryError,
)
from nutrimatch.estimator import (
    Aggregation,
    EstimatorConfig,
    ItemFailure,
    NoMatch,
    NutrientEstimate,
    aggregate,
    estimate_batch,
    estimate_title,
)
from nutrimatch.index import NeighborHit
from nutrimatch.providers import PrecomputedProvider, ProcessProvider
from nutrimatch.store import EmbeddingRecord, EmbeddingStore, store_to_bytes
from nutrimatch.usda import FoodDb, FoodRecord, NutrientVector, Source
from oracles import naive_mean, naive_median, naive_weighted_mean

DUMMY_PROVIDER = [sys.executable, str(Path(__file__).parent / "helpers" / "dummy_provider.py")]


def db_of(calories_by_id: dict[str, float | None], **field_overrides) -> FoodDb:
    records = []
    for food_id, calories in calories_by_id.items():
        fields = {"calories": calories}
        fields.update(field_overrides.get(food_id, {}) if isinstance(field_overrides.get(food_id), dict) else {})
        records.append(
            FoodRecord(id=food_id, name=food_id, nutrients=NutrientVector(**fields), source=Source.FOUNDATION)
        )
    return FoodDb(records)


def hits_of(*pairs: tuple[str, float]) -> list[NeighborHit]:
    return [NeighborHit(i, s) for i, s in pairs]


def test_weighted_mean_hand_case():
    db = db_of({"a": 100.0, "b": 200.0})
    out = aggregate(hits_of(("a", 0.8), ("b", 0.2)), db, Aggregation.WEIGHTED_MEAN)
    assert out.calories == pytest.approx(120.0, abs=1e-12)


def test_median_odd_and_even():
    db = db_of({"a": 100.0, "b": 200.0, "c": 300.0})
    odd = aggregate(hits_of(("a", 0.9), ("b", 0.8), ("c", 0.7)), db, Aggregation.MEDIAN)
    assert odd.calories == 200.0
    even = aggregate(hits_of(("a", 0.9), ("b", 0.8)), db, Aggregation.MEDIAN)
    assert even.calories == 150.0


def test_single_hit_identity():
    nutrients = NutrientVector(250.0, 10.0, None, 30.0)
    db = FoodDb([FoodRecord(id="x", name="x", nutrients=nutrients, source=Source.SURVEY)])
    for m in Aggregation:
        out = aggregate(hits_of(("x", 0.5)), db, m)
        assert out == nutrients


def test_equal_weights_match_mean():
    db = db_of({"a": 123.4, "b": 567.8, "c": 91.2})
    hits = hits_of(("a", 0.6), ("b", 0.6), ("c", 0.6))
    mean = aggregate(hits, db, Aggregation.MEAN)
    weighted = aggregate(hits, db, Aggregation.WEIGHTED_MEAN)
    assert weighted.calories == pytest.approx(mean.calories, abs=1e-9)


def test_absent_field_excluded_per_nutrient():
    db = FoodDb(
        [
            FoodRecord(id="a", name="a", nutrients=NutrientVector(100.0, 10.0), source=Source.FOUNDATION),
            FoodRecord(id="b", name="b", nutrients=NutrientVector(200.0, None, 5.0), source=Source.FOUNDATION),
        ]
    )
    out = aggregate(hits_of(("a", 0.5), ("b", 0.5)), db, Aggregation.MEAN)
    assert out.calories == 150.0
    assert out.protein == 10.0  # only a carries protein
    assert out.fat == 5.0  # only b carries fat
    assert out.carbohydrates is None  # nobody carries carbs


def test_negative_weights_clamped():
    db = db_of({"a": 100.0, "b": 500.0})
    out = aggregate(hits_of(("a", 0.5), ("b", -0.5)), db, Aggregation.WEIGHTED_MEAN)
    assert out.calories == pytest.approx(100.0)


def test_all_zero_weights_fall_back_to_mean():
    db = db_of({"a": 100.0, "b": 300.0})
    out = aggregate(hits_of(("a", 0.0), ("b", -0.7)), db, Aggregation.WEIGHTED_MEAN)
    assert out.calories == pytest.approx(200.0)


def test_aggregate_errors():
    db = db_of({"a": 100.0})
    with pytest.raises(AggregationError):
        aggregate([], db, Aggregation.MEAN)
    with pytest.raises(ConsistencyError, match="ghost"):
        aggregate(hits_of(("ghost", 0.9)), db, Aggregation.MEAN)


def test_estimator_config_validation():
    with pytest.raises(ParameterError):
        EstimatorConfig(n=0)
    with pytest.raises(ParameterError):
        EstimatorConfig(t=1.5)
    cfg = EstimatorConfig()
    assert (cfg.n, cfg.t, cfg.m) == (50, 0.0, Aggregation.WEIGHTED_MEAN)


hit_sets = st.lists(
    st.tuples(
        st.floats(min_value=0.0, max_value=1000.0, allow_nan=False),
        st.floats(min_value=-1.0, max_value=1.0, allow_nan=False),
    ),
    min_size=1,
    max_size=12,
)


@given(hit_sets, st.sampled_from(list(Aggregation)), st.randoms())
@settings(max_examples=300)
def test_aggregate_containment_and_permutation_invariance(pairs, m, rng):
    ids = [f"id{i}" for i in range(len(pairs))]
    db = db_of({i: value for i, (value, _) in zip(ids, pairs)})
    hits = hits_of(*[(i, sim) for i, (_, sim) in zip(ids, pairs)])
    out = aggregate(hits, db, m)
    values = [value for value, _ in pairs]
    assert min(values) - 1e-9 <= out.calories <= max(values) + 1e-9
    shuffled = list(hits)
    rng.shuffle(shuffled)
    again = aggregate(shuffled, db, m)
    assert again.calories == out.calories  # bitwise permutation invariance


@given(hit_sets)
@settings(max_examples=200)
def test_aggregate_matches_naive_oracle(pairs):
    ids = [f"id{i}" for i in range(len(pairs))]
    db = db_of({i: value for i, (value, _) in zip(ids, pairs)})
    hits = hits_of(*[(i, sim) for i, (_, sim) in zip(ids, pairs)])
    values = [value for value, _ in pairs]
    sims = [sim for _, sim in pairs]
    assert aggregate(hits, db, Aggregation.MEAN).calories == pytest.approx(naive_mean(values), rel=1e-12)
    assert aggregate(hits, db, Aggregation.MEDIAN).calories == pytest.approx(naive_median(values), rel=1e-12)
    assert aggregate(hits, db, Aggregation.WEIGHTED_MEAN).calories == pytest.approx(
        naive_weighted_mean(values, sims), rel=1e-9, abs=1e-9
    )


# ---------------------------------------------------------------- end to end


def self_provider(fixture_db):
    """Each food name maps to its own one-hot embedding row."""
    from conftest import FIXTURE_FOODS

    return provider_for({name: one_hot(pos) for name, pos, *_ in FIXTURE_FOODS})


def test_estimate_title_exact_self_match(fixture_index, fixture_db):
    provider = self_provider(fixture_db)
    out = estimate_title("white rice", fixture_index, fixture_db, provider, EstimatorConfig(n=1, t=0.0))
    assert isinstance(out, NutrientEstimate)
    assert out.support == 1
    assert out.nutrients == fixture_db.get("white rice").nutrients
    assert out.max_similarity == pytest.approx(1.0, abs=1e-6)
    assert out.neighbor_ids == ("white rice",)


def test_estimate_title_threshold_no_match(fixture_index, fixture_db):
    provider = provider_for({"odd dish": query_toward({"white rice": 0.5, "tomato soup": 0.5})})
    out = estimate_title("odd dish", fixture_index, fixture_db, provider, EstimatorConfig(n=3, t=0.999))
    assert isinstance(out, NoMatch)


def test_estimate_title_invariants(fixture_index, fixture_db):
    provider = provider_for({"mixed plate": query_toward({"white rice": 0.7, "tomato soup": 0.6, "wheat bread": 0.2})})
    cfg = EstimatorConfig(n=2, t=0.1, m=Aggregation.WEIGHTED_MEAN)
    out = estimate_title("Mixed, Plate", fixture_index, fixture_db, provider, cfg)
    assert isinstance(out, NutrientEstimate)
    assert 1 <= out.support <= cfg.n
    assert out.max_similarity >= out.min_similarity >= cfg.t


def test_estimate_title_provider_failure_is_not_nomatch(fixture_index, fixture_db):
    provider = provider_for({})
    with pytest.raises(ProviderError):
        estimate_title("unknown dish", fixture_index, fixture_db, provider, EstimatorConfig())


def test_estimate_title_empty_title(fixture_index, fixture_db):
    with pytest.raises(QueryError):
        estimate_title(",,,", fixture_index, fixture_db, self_provider(fixture_db), EstimatorConfig())


def test_batch_all_valid(fixture_index, fixture_db):
    provider = self_provider(fixture_db)
    titles = ["white rice", "tomato soup", "cheddar cheese"]
    out = estimate_batch(titles, fixture_index, fixture_db, provider, EstimatorConfig(n=1, t=0.0))
    assert [title for title, _ in out] == titles
    assert all(isinstance(r, NutrientEstimate) for _, r in out)
    assert out[0][1].nutrients.calories == 130.0


def test_batch_one_malformed_title(fixture_index, fixture_db):
    provider = self_provider(fixture_db)
    titles = ["white rice", ",,,", "tomato soup"]
    out = estimate_batch(titles, fixture_index, fixture_db, provider, EstimatorConfig(n=1, t=0.0))
    assert isinstance(out[0][1], NutrientEstimate)
    assert isinstance(out[1][1], ItemFailure)
    assert isinstance(out[2][1], NutrientEstimate)


def test_batch_missing_embedding_is_item_failure(fixture_index, fixture_db):
    provider = self_provider(fixture_db)
    out = estimate_batch(
        ["white rice", "dish nobody embedded"], fixture_index, fixture_db, provider, EstimatorConfig(n=1, t=0.0)
    )
    assert isinstance(out[0][1], NutrientEstimate)
    assert isinstance(out[1][1], ItemFailure)
    assert "dish nobody embedded" in out[1][1].message


def test_batch_duplicate_titles_identical(fixture_index, fixture_db):
    provider = self_provider(fixture_db)
    out = estimate_batch(
        ["wheat bread", "wheat bread"], fixture_index, fixture_db, provider, EstimatorConfig(n=2, t=0.0)
    )
    assert out[0][1] == out[1][1]


def test_batch_workers_match_serial(fixture_index, fixture_db):
    provider = self_provider(fixture_db)
    titles = ["white rice", "tomato soup", "cheddar cheese", "wheat bread", "grilled chicken"] * 3
    cfg = EstimatorConfig(n=3, t=0.0)
    serial = estimate_batch(titles, fixture_index, fixture_db, provider, cfg, workers=1)
    parallel = estimate_batch(titles, fixture_index, fixture_db, provider, cfg, workers=4)
    assert serial == parallel


def test_batch_empty_titles_rejected(fixture_index, fixture_db):
    with pytest.raises(ParameterError):
        estimate_batch([], fixture_index, fixture_db, self_provider(fixture_db), EstimatorConfig())


# ------------------------------------------------------- precomputed provider


def test_from_store_and_titles_alignment():
    records = [EmbeddingRecord(str(i), one_hot(i, 4)) for i in range(2)]
    store = EmbeddingStore(dimension=4, records=records)
    provider = PrecomputedProvider.from_store_and_titles(store, ["Apple, Pie", "Banana Bread"])
    out = provider.embed(["apple pie", "banana bread"])
    assert np.allclose(out[0], one_hot(0, 4))
    assert np.allclose(out[1], one_hot(1, 4))


def test_from_store_and_titles_count_mismatch():
    store = EmbeddingStore(dimension=4, records=[EmbeddingRecord("0", one_hot(0, 4))])
    with pytest.raises(ProviderError, match="1 records"):
        PrecomputedProvider.from_store_and_titles(store, ["a", "b"])


def test_from_store_and_titles_requires_line_keys():
    store = EmbeddingStore(dimension=4, records=[EmbeddingRecord("apple", one_hot(0, 4))])
    with pytest.raises(ProviderError, match="line-keyed"):
        PrecomputedProvider.from_store_and_titles(store, ["apple"])


def test_missing_text_error_lists_texts():
    provider = provider_for({"known": one_hot(0)})
    with pytest.raises(MissingTextError) as excinfo:
        provider.embed(["known", "mystery soup"])
    assert excinfo.value.missing == ["mystery soup"]


# ---------------------------------------------------------- process provider


def test_process_provider_round_trip():
    provider = ProcessProvider(DUMMY_PROVIDER)
    out = provider.embed(["apple pie", "banana bread", "apple pie"])
    assert out.shape == (3, 6)
    # same text, same vector; distinct texts differ
    assert np.array_equal(out[0], out[2])
    assert not np.array_equal(out[0], out[1])
    again = provider.embed(["apple pie"])
    assert np.array_equal(out[0], again[0])


def test_process_provider_failure_modes():
    with pytest.raises(ProviderError, match="simulated provider crash"):
        ProcessProvider(DUMMY_PROVIDER + ["--fail"]).embed(["x"])
    with pytest.raises(ProviderError, match="nteb-provider/1"):
        ProcessProvider(DUMMY_PROVIDER + ["--bad-tag"]).embed(["x"])
    with pytest.raises(ProviderError, match="1 vectors for 2"):
        ProcessProvider(DUMMY_PROVIDER + ["--drop-one"]).embed(["x", "y"])
    with pytest.raises(ProviderError, match="cannot start"):
        ProcessProvider(["/nonexistent/provider-binary"]).embed(["x"])
    with pytest.raises(ProviderError, match="line break"):
        ProcessProvider(DUMMY_PROVIDER).embed(["two\nlines"])

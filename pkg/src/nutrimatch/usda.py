"""USDA FoodData Central ingestion and the canonical food database.

Two export shapes are accepted: the two-file style (food.csv with ids and
descriptions plus food_nutrient.csv with per-nutrient amounts) and a combined
long-format CSV carrying all four columns in one table. Column names and the
nutrient-id mapping are pinned in an IngestSchema so schema drift is a config
change.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import BuildError, IngestError, QueryError

logger = logging.getLogger(__name__)

NUTRIENT_FIELDS = ("calories", "protein", "fat", "carbohydrates")

# Standalone-word filter: "strawberries" must survive, "beef raw" must not.
_RAW_WORD_RE = re.compile(r"\b(raw|uncooked)\b")


class Source(enum.Enum):
    FOUNDATION = "foundation"
    SURVEY = "survey"
    SR_LEGACY = "sr_legacy"

    @property
    def priority(self) -> int:
        return _SOURCE_PRIORITY[self]


_SOURCE_PRIORITY = {Source.FOUNDATION: 0, Source.SURVEY: 1, Source.SR_LEGACY: 2}


@dataclass(frozen=True)
class NutrientVector:
    """Per-100 g macro-nutrients; a missing field means the source lacked it."""

    calories: float | None = None
    protein: float | None = None
    fat: float | None = None
    carbohydrates: float | None = None

    def __post_init__(self):
        for name in NUTRIENT_FIELDS:
            value = getattr(self, name)
            if value is not None and not (value >= 0):
                raise IngestError(f"nutrient {name} must be >= 0, got {value}")

    def present(self) -> dict[str, float]:
        return {n: v for n in NUTRIENT_FIELDS if (v := getattr(self, n)) is not None}


@dataclass(frozen=True)
class RawFoodEntry:
    source_id: str
    description: str
    source: Source
    nutrients: NutrientVector = field(default_factory=NutrientVector)

    def __post_init__(self):
        if not self.source_id:
            raise IngestError("source_id must be non-empty")
        if not self.description:
            raise IngestError("description must be non-empty")


@dataclass(frozen=True)
class FoodRecord:
    """One deduplicated food keyed by its normalized name; calories always present."""

    id: str
    name: str
    nutrients: NutrientVector
    source: Source

    def __post_init__(self):
        if self.nutrients.calories is None:
            raise BuildError(f"record {self.id!r} is missing calories")


class FoodDb:
    """Immutable, id-sorted collection of FoodRecord with per-source counts."""

    def __init__(self, records: Iterable[FoodRecord]):
        self._records = sorted(records, key=lambda r: r.id)
        self._by_id = {}
        for rec in self._records:
            if rec.id in self._by_id:
                raise BuildError(f"duplicate food id {rec.id!r}")
            self._by_id[rec.id] = rec

    @property
    def records(self) -> list[FoodRecord]:
        return list(self._records)

    def counts_by_source(self) -> dict[Source, int]:
        counts = {s: 0 for s in Source}
        for rec in self._records:
            counts[rec.source] += 1
        return counts

    def get(self, food_id: str) -> FoodRecord:
        return self._by_id[food_id]

    def __contains__(self, food_id: str) -> bool:
        return food_id in self._by_id

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[FoodRecord]:
        return iter(self._records)


@dataclass(frozen=True)
class IngestSchema:
    """Pinned FoodData Central column layout and nutrient-id mapping."""

    version: str = "fdc-v1"
    food_id_column: str = "fdc_id"
    description_column: str = "description"
    nutrient_id_column: str = "nutrient_id"
    amount_column: str = "amount"
    # FDC nutrient ids: energy kcal, protein, total fat, carbohydrate by difference.
    nutrient_ids: tuple[tuple[str, str], ...] = (
        ("1008", "calories"),
        ("1003", "protein"),
        ("1004", "fat"),
        ("1005", "carbohydrates"),
    )
    # Multiplier onto the per-100 g basis; FDC amounts already are per 100 g.
    amount_scale: float = 1.0

    def nutrient_map(self) -> dict[str, str]:
        return dict(self.nutrient_ids)


DEFAULT_SCHEMA = IngestSchema()


def normalize_usda_name(description: str) -> str:
    """Lowercase, split on commas, reverse phrase order, rejoin with spaces.

    "Mushrooms, portabella, grilled" -> "grilled portabella mushrooms"
    """
    phrases = [p for p in (chunk.strip() for chunk in description.lower().split(",")) if p]
    return " ".join(" ".join(reversed(phrases)).split())


def normalize_query_title(title: str) -> str:
    """Lowercase, delete commas, collapse whitespace. No token reversal."""
    cleaned = " ".join(title.lower().replace(",", " ").split())
    if not cleaned:
        raise QueryError(f"title {title!r} is empty after normalization")
    return cleaned


def _require_columns(fieldnames, required: Iterable[str], what: str):
    have = set(fieldnames or ())
    for column in required:
        if column not in have:
            raise IngestError(f"{what}: missing header column {column!r}")


class _EntryAssembler:
    """Accumulates (id, description, nutrient amounts) rows in first-seen order."""

    def __init__(self, source: Source, schema: IngestSchema):
        self.source = source
        self.schema = schema
        self.order: list[str] = []
        self.descriptions: dict[str, str] = {}
        self.nutrients: dict[str, dict[str, float]] = {}

    def add_food(self, food_id: str, description: str):
        if food_id not in self.descriptions:
            self.order.append(food_id)
            self.descriptions[food_id] = description
            self.nutrients[food_id] = {}
        elif not self.descriptions[food_id] and description:
            self.descriptions[food_id] = description

    def add_nutrient(self, food_id: str, nutrient_id: str, amount_text: str):
        field_name = self.schema.nutrient_map().get(nutrient_id.strip())
        if field_name is None:
            return
        if food_id not in self.descriptions:
            # nutrient row for an unknown food: register it; description may follow
            self.order.append(food_id)
            self.descriptions[food_id] = ""
            self.nutrients[food_id] = {}
        try:
            amount = float(amount_text)
        except (TypeError, ValueError):
            logger.warning("food %s: unparseable %s amount %r, leaving absent", food_id, field_name, amount_text)
            return
        amount *= self.schema.amount_scale
        if amount < 0:
            logger.warning("food %s: negative %s amount %r, leaving absent", food_id, field_name, amount_text)
            return
        self.nutrients[food_id][field_name] = amount

    def entries(self) -> list[RawFoodEntry]:
        out = []
        for food_id in self.order:
            description = self.descriptions[food_id]
            if not description:
                logger.warning("food %s: no description row, skipping", food_id)
                continue
            out.append(
                RawFoodEntry(
                    source_id=food_id,
                    description=description,
                    source=self.source,
                    nutrients=NutrientVector(**self.nutrients[food_id]),
                )
            )
        return out


def _as_text_stream(stream):
    if isinstance(stream, (str, os.PathLike)):
        return open(stream, "r", encoding="utf-8-sig", newline="")
    if isinstance(stream, (bytes, bytearray)):
        return io.StringIO(bytes(stream).decode("utf-8-sig"))
    if hasattr(stream, "read") and isinstance(stream.read(0), bytes):
        return io.TextIOWrapper(stream, encoding="utf-8-sig", newline="")
    return stream


def parse_usda_export(stream, source: Source, schema: IngestSchema = DEFAULT_SCHEMA) -> list[RawFoodEntry]:
    """Parse a combined long-format export: one row per (food, nutrient).

    Header must carry the schema's id/description/nutrient/amount columns.
    A row with an empty nutrient id just registers the food.
    """
    text = _as_text_stream(stream)
    reader = csv.DictReader(text)
    if reader.fieldnames is None:
        raise IngestError("missing header: export is empty")
    _require_columns(
        reader.fieldnames,
        (schema.food_id_column, schema.description_column, schema.nutrient_id_column, schema.amount_column),
        "combined export",
    )
    asm = _EntryAssembler(source, schema)
    for row in reader:
        food_id = (row.get(schema.food_id_column) or "").strip()
        if not food_id:
            continue
        asm.add_food(food_id, (row.get(schema.description_column) or "").strip())
        nutrient_id = (row.get(schema.nutrient_id_column) or "").strip()
        if nutrient_id:
            asm.add_nutrient(food_id, nutrient_id, (row.get(schema.amount_column) or "").strip())
    return asm.entries()


def parse_fdc_tables(food_stream, nutrient_stream, source: Source, schema: IngestSchema = DEFAULT_SCHEMA) -> list[RawFoodEntry]:
    """Parse the two-file style: food.csv plus food_nutrient.csv."""
    food_text = _as_text_stream(food_stream)
    food_reader = csv.DictReader(food_text)
    if food_reader.fieldnames is None:
        raise IngestError("missing header: food table is empty")
    _require_columns(food_reader.fieldnames, (schema.food_id_column, schema.description_column), "food table")
    asm = _EntryAssembler(source, schema)
    for row in food_reader:
        food_id = (row.get(schema.food_id_column) or "").strip()
        if food_id:
            asm.add_food(food_id, (row.get(schema.description_column) or "").strip())

    nutrient_text = _as_text_stream(nutrient_stream)
    nutrient_reader = csv.DictReader(nutrient_text)
    if nutrient_reader.fieldnames is None:
        raise IngestError("missing header: nutrient table is empty")
    _require_columns(
        nutrient_reader.fieldnames,
        (schema.food_id_column, schema.nutrient_id_column, schema.amount_column),
        "nutrient table",
    )
    for row in nutrient_reader:
        food_id = (row.get(schema.food_id_column) or "").strip()
        nutrient_id = (row.get(schema.nutrient_id_column) or "").strip()
        if food_id and nutrient_id:
            asm.add_nutrient(food_id, nutrient_id, (row.get(schema.amount_column) or "").strip())
    return asm.entries()


def load_source_path(path, source: Source, schema: IngestSchema = DEFAULT_SCHEMA) -> list[RawFoodEntry]:
    """Load one source: a directory with food.csv + food_nutrient.csv, or a combined CSV."""
    p = Path(path)
    if p.is_dir():
        food_csv = p / "food.csv"
        nutrient_csv = p / "food_nutrient.csv"
        for required in (food_csv, nutrient_csv):
            if not required.is_file():
                raise IngestError(f"{p}: expected {required.name} in export directory")
        with open(food_csv, encoding="utf-8-sig", newline="") as ff, open(
            nutrient_csv, encoding="utf-8-sig", newline=""
        ) as nf:
            return parse_fdc_tables(ff, nf, source, schema)
    if not p.is_file():
        raise IngestError(f"{p}: no such export file or directory")
    return parse_usda_export(p, source, schema)


def build_food_db(entries: Iterable[RawFoodEntry]) -> FoodDb:
    """Normalize, filter raw/uncooked and calorie-less foods, deduplicate.

    Duplicate normalized names collapse to one record by source priority
    Foundation > Survey > SRLegacy, ties to the lexicographically smallest
    source_id. Output order is sorted by id.
    """
    best: dict[str, tuple[tuple[int, str], RawFoodEntry]] = {}
    dropped_raw = dropped_no_calories = dropped_empty = duplicates = 0
    for entry in entries:
        name = normalize_usda_name(entry.description)
        if not name:
            dropped_empty += 1
            continue
        if _RAW_WORD_RE.search(name):
            dropped_raw += 1
            continue
        if entry.nutrients.calories is None:
            dropped_no_calories += 1
            continue
        rank = (entry.source.priority, entry.source_id)
        if name in best:
            duplicates += 1
            if rank < best[name][0]:
                best[name] = (rank, entry)
        else:
            best[name] = (rank, entry)
    if not best:
        raise BuildError("no food records survived normalization and filtering")
    logger.info(
        "build_food_db: kept %d, dropped %d raw/uncooked, %d without calories, %d empty names, collapsed %d duplicates",
        len(best), dropped_raw, dropped_no_calories, dropped_empty, duplicates,
    )
    records = [
        FoodRecord(id=name, name=name, nutrients=entry.nutrients, source=entry.source)
        for name, (_, entry) in best.items()
    ]
    return FoodDb(records)


def _fmt_nutrient(value: float | None) -> str:
    return "" if value is None else str(value)


def write_food_db(db: FoodDb, sink) -> None:
    """Canonical TSV: id, name, source, calories, protein, fat, carbohydrates.

    Sorted by id, LF line endings, absent nutrient = empty field.
    """
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            write_food_db(db, fh)
            return
    for rec in db:
        nv = rec.nutrients
        fields = (
            rec.id,
            rec.name,
            rec.source.value,
            _fmt_nutrient(nv.calories),
            _fmt_nutrient(nv.protein),
            _fmt_nutrient(nv.fat),
            _fmt_nutrient(nv.carbohydrates),
        )
        sink.write("\t".join(fields) + "\n")


def read_food_db(source) -> FoodDb:
    """Inverse of write_food_db."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return read_food_db(fh)
    records = []
    sources = {s.value: s for s in Source}
    for lineno, line in enumerate(source, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 7:
            raise IngestError(f"food db line {lineno}: expected 7 fields, got {len(parts)}")
        rec_id, name, source_text = parts[0], parts[1], parts[2]
        if source_text not in sources:
            raise IngestError(f"food db line {lineno}: unknown source {source_text!r}")
        values = [float(v) if v else None for v in parts[3:7]]
        records.append(
            FoodRecord(
                id=rec_id,
                name=name,
                nutrients=NutrientVector(*values),
                source=sources[source_text],
            )
        )
    if not records:
        raise IngestError("food db file holds no records")
    return FoodDb(records)

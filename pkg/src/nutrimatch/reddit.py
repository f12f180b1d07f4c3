"""Food-post corpus pipeline: dump parsing, filtering, weekly time series.

All of the aggregation steps here are associative merges over per-record
values, so sharding input files across workers and merging the partial
results reproduces the single-pass output exactly.
"""

from __future__ import annotations

import bz2
import csv
import gzip
import json
import logging
import lzma
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from statistics import median
from typing import Iterable, Mapping, Sequence

from .errors import CorpusError
from .estimator import BatchResult, NutrientEstimate

logger = logging.getLogger(__name__)


class Tag(Enum):
    HOMEMADE = "Homemade"
    I_ATE = "I ate"
    PRO_CHEF = "Pro/Chef"


_TAG_RE = re.compile(r"\[\s*(homemade|i\s+ate|pro\s*/\s*chef)\s*\]", re.IGNORECASE)
_TAG_BY_KEY = {"homemade": Tag.HOMEMADE, "iate": Tag.I_ATE, "pro/chef": Tag.PRO_CHEF}


@dataclass(frozen=True)
class CorpusConfig:
    min_year: int = 2017
    max_year: int = 2021
    deletion_sentinels: tuple[str, ...] = ("[deleted]", "[removed]")
    max_malformed_fraction: float = 0.01
    # the fraction gate only fires on inputs of at least this many lines, so
    # a tiny fixture with one bad line parses instead of erroring
    malformed_gate_min_lines: int = 1000


DEFAULT_CORPUS_CONFIG = CorpusConfig()


@dataclass(frozen=True)
class RawSubmission:
    id: str
    author: str
    title: str
    created_utc: float
    removed: bool = False


@dataclass(frozen=True)
class Submission:
    id: str
    author: str
    created_utc: float
    raw_title: str
    tag: Tag
    clean_title: str


@dataclass
class ParseResult:
    records: list[RawSubmission] = field(default_factory=list)
    malformed: int = 0
    out_of_range: int = 0
    total_lines: int = 0

    def extend(self, other: "ParseResult") -> None:
        self.records.extend(other.records)
        self.malformed += other.malformed
        self.out_of_range += other.out_of_range
        self.total_lines += other.total_lines


@dataclass(frozen=True)
class FilterReport:
    input_count: int
    deleted: int
    untagged: int
    empty_title: int
    duplicate: int
    kept: int


def _open_dump(path):
    suffix = Path(path).suffix.lower()
    if suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8", errors="replace")
    if suffix == ".bz2":
        return bz2.open(path, "rt", encoding="utf-8", errors="replace")
    if suffix in (".xz", ".lzma"):
        return lzma.open(path, "rt", encoding="utf-8", errors="replace")
    if suffix == ".zst":
        try:
            import zstandard
        except ImportError:
            raise CorpusError(
                f"{path}: .zst dumps need the optional zstandard package; "
                "decompress the file first or install zstandard"
            ) from None
        fh = zstandard.open(path, "rt", encoding="utf-8", errors="replace")
        return fh
    return open(path, "r", encoding="utf-8", errors="replace")


def _coerce_record(obj) -> RawSubmission | None:
    if not isinstance(obj, dict):
        return None
    sid, author, title = obj.get("id"), obj.get("author"), obj.get("title")
    created = obj.get("created_utc")
    if not (isinstance(sid, str) and sid and isinstance(author, str) and isinstance(title, str)):
        return None
    try:
        created_utc = float(created)
    except (TypeError, ValueError):
        return None
    removed = bool(obj.get("removed_by_category")) or bool(obj.get("removed"))
    return RawSubmission(sid, author, title, created_utc, removed)


def _utc_year(timestamp: float) -> int:
    return datetime.fromtimestamp(timestamp, tz=timezone.utc).year


def parse_submissions(source, config: CorpusConfig = DEFAULT_CORPUS_CONFIG) -> ParseResult:
    """Tolerantly parse one line-delimited JSON dump.

    Malformed lines are counted and skipped; records outside the configured
    year range are counted separately and dropped. A malformed share above
    the configured fraction (on large inputs) aborts, since that usually
    means the wrong file was supplied.
    """
    if isinstance(source, (str, os.PathLike)):
        with _open_dump(source) as fh:
            result = _parse_lines(fh, config)
    else:
        result = _parse_lines(source, config)
    if (
        result.total_lines >= config.malformed_gate_min_lines
        and result.malformed > config.max_malformed_fraction * result.total_lines
    ):
        raise CorpusError(
            f"{result.malformed} of {result.total_lines} lines malformed "
            f"(> {config.max_malformed_fraction:.0%}); is this a submission dump?"
        )
    return result


def _parse_lines(lines: Iterable[str], config: CorpusConfig) -> ParseResult:
    result = ParseResult()
    for line in lines:
        line = line.strip()
        if not line:
            continue
        result.total_lines += 1
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            result.malformed += 1
            continue
        record = _coerce_record(obj)
        if record is None:
            result.malformed += 1
            continue
        if not (config.min_year <= _utc_year(record.created_utc) <= config.max_year):
            result.out_of_range += 1
            continue
        result.records.append(record)
    if result.malformed:
        logger.info("skipped %d malformed line(s) of %d", result.malformed, result.total_lines)
    return result


def parse_many(paths: Sequence, config: CorpusConfig = DEFAULT_CORPUS_CONFIG) -> ParseResult:
    merged = ParseResult()
    for path in paths:
        merged.extend(parse_submissions(path, config))
    return merged


def extract_tag(raw_title: str) -> tuple[Tag, str] | None:
    """First bracketed tag (case-insensitive) plus the title without it;
    None when untagged."""
    match = _TAG_RE.search(raw_title)
    if match is None:
        return None
    key = re.sub(r"\s+", "", match.group(1)).lower()
    clean = raw_title[: match.start()] + " " + raw_title[match.end() :]
    return _TAG_BY_KEY[key], " ".join(clean.split())


def _as_raw(record) -> RawSubmission:
    if isinstance(record, Submission):
        return RawSubmission(record.id, record.author, record.raw_title, record.created_utc)
    return record


def apply_filters(
    records: Iterable[RawSubmission | Submission],
    config: CorpusConfig = DEFAULT_CORPUS_CONFIG,
) -> tuple[list[Submission], FilterReport]:
    """Drop deleted, untagged, and (title, UTC day, author)-duplicate records.

    Duplicates keep the earliest created_utc (ties broken by id). The output
    is sorted by (created_utc, id), so the whole pass is deterministic, and
    running it again over its own output is the identity.
    """
    sentinels = set(config.deletion_sentinels)
    deleted = untagged = empty_title = 0
    tagged: list[Submission] = []
    input_count = 0
    for record in records:
        input_count += 1
        raw = _as_raw(record)
        if raw.removed or raw.author in sentinels or raw.title.strip() in sentinels:
            deleted += 1
            continue
        extracted = extract_tag(raw.title)
        if extracted is None:
            untagged += 1
            continue
        tag, clean_title = extracted
        if not clean_title:
            empty_title += 1
            continue
        tagged.append(Submission(raw.id, raw.author, raw.created_utc, raw.title, tag, clean_title))

    tagged.sort(key=lambda s: (s.created_utc, s.id))
    seen: set[tuple[str, object, str]] = set()
    kept: list[Submission] = []
    for sub in tagged:
        day = datetime.fromtimestamp(sub.created_utc, tz=timezone.utc).date()
        key = (sub.raw_title, day, sub.author)
        if key in seen:
            continue
        seen.add(key)
        kept.append(sub)
    report = FilterReport(
        input_count=input_count,
        deleted=deleted,
        untagged=untagged,
        empty_title=empty_title,
        duplicate=len(tagged) - len(kept),
        kept=len(kept),
    )
    return kept, report


def filter_submissions(
    records: Iterable[RawSubmission | Submission],
    config: CorpusConfig = DEFAULT_CORPUS_CONFIG,
) -> list[Submission]:
    kept, _ = apply_filters(records, config)
    return kept


def week_key(timestamp: float) -> str:
    """ISO-8601 year-week of a UTC timestamp, e.g. '2020-W01'."""
    iso = datetime.fromtimestamp(timestamp, tz=timezone.utc).date().isocalendar()
    return f"{iso[0]}-W{iso[1]:02d}"


@dataclass(frozen=True)
class WeekActivity:
    week: str
    posts: int
    unique_authors: int


@dataclass(frozen=True)
class WeekNutrients:
    week: str
    calories_median: float | None
    protein_median: float | None
    fat_median: float | None
    carbs_median: float | None
    covered_posts: int


def weekly_activity(submissions: Sequence[Submission]) -> list[WeekActivity]:
    """Post and distinct-author counts per ISO week, weeks ascending."""
    if not submissions:
        raise CorpusError("weekly activity needs at least one submission")
    posts: dict[str, int] = {}
    authors: dict[str, set[str]] = {}
    for sub in submissions:
        week = week_key(sub.created_utc)
        posts[week] = posts.get(week, 0) + 1
        authors.setdefault(week, set()).add(sub.author)
    return [WeekActivity(week, posts[week], len(authors[week])) for week in sorted(posts)]


_MEDIAN_FIELDS = ("calories", "protein", "fat", "carbohydrates")


def weekly_medians(
    submissions: Sequence[Submission],
    estimates: Mapping[str, BatchResult],
) -> list[WeekNutrients]:
    """Per-week nutrient medians over posts with an estimate, weeks ascending.

    Estimates are looked up by submission id; NoMatch and failure entries do
    not contribute. A week with no covered post keeps empty medians rather
    than zeros.
    """
    if not submissions:
        raise CorpusError("weekly medians need at least one submission")
    values: dict[str, dict[str, list[float]]] = {}
    covered: dict[str, int] = {}
    for sub in submissions:
        week = week_key(sub.created_utc)
        covered.setdefault(week, 0)
        estimate = estimates.get(sub.id)
        if not isinstance(estimate, NutrientEstimate):
            continue
        covered[week] += 1
        per_week = values.setdefault(week, {})
        for name in _MEDIAN_FIELDS:
            value = getattr(estimate.nutrients, name)
            if value is not None:
                per_week.setdefault(name, []).append(value)

    out = []
    for week in sorted(covered):
        per_week = values.get(week, {})
        medians = {
            name: float(median(per_week[name])) if name in per_week else None
            for name in _MEDIAN_FIELDS
        }
        out.append(
            WeekNutrients(
                week,
                medians["calories"],
                medians["protein"],
                medians["fat"],
                medians["carbohydrates"],
                covered[week],
            )
        )
    return out


def write_weekly_activity(rows: Sequence[WeekActivity], sink) -> None:
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            write_weekly_activity(rows, fh)
            return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["week", "posts", "unique_authors"])
    for row in rows:
        writer.writerow([row.week, row.posts, row.unique_authors])


def write_weekly_nutrients(rows: Sequence[WeekNutrients], sink) -> None:
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            write_weekly_nutrients(rows, fh)
            return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["week", "calories_median", "protein_median", "fat_median", "carbs_median", "covered_posts"])
    for row in rows:
        writer.writerow(
            [
                row.week,
                "" if row.calories_median is None else row.calories_median,
                "" if row.protein_median is None else row.protein_median,
                "" if row.fat_median is None else row.fat_median,
                "" if row.carbs_median is None else row.carbs_median,
                row.covered_posts,
            ]
        )

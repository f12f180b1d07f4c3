"""Command-line entry point: the pipeline as config-pinned subcommands.

Configuration precedence is CLI flag > config file > built-in default, the
defaults being the tuned estimator settings (n=50, t=0.0, weighted mean).
Logs go to standard error; data goes to files under --out or to standard
output. File outputs are atomic and accompanied by a run manifest.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shlex
import sys
from pathlib import Path
from typing import Sequence

from .errors import NutrimatchError, ParameterError
from .estimator import (
    Aggregation,
    EstimatorConfig,
    ItemFailure,
    NoMatch,
    NutrientEstimate,
    estimate_batch,
    estimate_title,
)
from .index import Index, build_index
from .providers import PrecomputedProvider, ProcessProvider
from .reddit import (
    CorpusConfig,
    Submission,
    Tag,
    apply_filters,
    parse_many,
    weekly_activity,
    weekly_medians,
    write_weekly_activity,
    write_weekly_nutrients,
)
from .runio import atomic_write, write_manifest
from .store import EmbeddingRecord, EmbeddingStore, read_store, write_store
from .tuning import (
    DEFAULT_GRID,
    EstimationContext,
    GridSpec,
    HttpBaselineClient,
    baseline_eval,
    dataset_stats,
    evaluate,
    grid_search,
    read_labeled_csv,
    split_dataset,
    write_tuning_report,
)
from .usda import FoodDb, Source, build_food_db, load_source_path, read_food_db, write_food_db

logger = logging.getLogger("nutrimatch")

BATCH_HEADER = ["title", "calories", "protein", "fat", "carbohydrates", "support", "max_similarity", "status"]

_DEFAULTS = {
    "n": 50,
    "t": 0.0,
    "m": "weighted_mean",
    "seed": 0,
    "workers": 0,  # 0 = available parallelism
    "train_fraction": 0.8,
    "min_year": 2017,
    "max_year": 2021,
}


class Settings:
    """Merged view over CLI args, an optional JSON config file, and defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file: dict = {}
        config_path = getattr(args, "config", None)
        if config_path:
            with open(config_path, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
            if not isinstance(loaded, dict):
                raise ParameterError(f"{config_path}: config file must hold a JSON object")
            self.file = loaded

    def get(self, key: str, default=None):
        value = getattr(self.args, key, None)
        if value is not None:
            return value
        if key in self.file:
            return self.file[key]
        return _DEFAULTS.get(key, default)

    def require(self, key: str, flag: str):
        value = self.get(key)
        if value is None:
            raise ParameterError(f"missing required {flag} (or config key {key!r})")
        return value

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(
            n=int(self.get("n")),
            t=float(self.get("t")),
            m=Aggregation(str(self.get("m"))),
        )

    def corpus_config(self) -> CorpusConfig:
        return CorpusConfig(min_year=int(self.get("min_year")), max_year=int(self.get("max_year")))

    def workers(self) -> int:
        value = int(self.get("workers"))
        return value if value > 0 else (os.cpu_count() or 1)

    def echo(self, keys: Sequence[str]) -> dict:
        return {key: self.get(key) for key in keys}


def _read_lines(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _load_index(settings: Settings) -> tuple[Index, FoodDb]:
    db = read_food_db(settings.require("food_db", "--food-db"))
    store = read_store(settings.require("embeddings", "--embeddings"))
    return build_index(store, db), db


def _build_provider(settings: Settings, titles: Sequence[str] | None):
    """Precomputed NTEB lookup or an external process, per flags.

    A store keyed by line numbers maps onto `titles` (or --titles-file)
    positionally; otherwise record ids are taken to be normalized texts.
    """
    provider_cmd = settings.get("provider_cmd")
    if provider_cmd:
        return ProcessProvider(shlex.split(str(provider_cmd)))
    store = read_store(settings.require("query_embeddings", "--query-embeddings or --provider-cmd"))
    titles_file = settings.get("titles_file")
    if titles_file:
        return PrecomputedProvider.from_store_and_titles(store, _read_lines(titles_file))
    line_keyed = bool(store.records) and all(rec.id.isdigit() for rec in store.records)
    if line_keyed and titles is not None and len(titles) == len(store.records):
        return PrecomputedProvider.from_store_and_titles(store, titles)
    return PrecomputedProvider.from_store(store)


def _estimate_row(title: str, result) -> list:
    if isinstance(result, NutrientEstimate):
        nv = result.nutrients
        fmt = lambda v: "" if v is None else v
        return [
            title,
            fmt(nv.calories),
            fmt(nv.protein),
            fmt(nv.fat),
            fmt(nv.carbohydrates),
            result.support,
            result.max_similarity,
            "ok",
        ]
    status = "no_match" if isinstance(result, NoMatch) else "error"
    if isinstance(result, ItemFailure):
        logger.warning("title %r failed: %s", title, result.message)
    return [title, "", "", "", "", 0, "", status]


def _write_batch_csv(rows, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(BATCH_HEADER)
    for title, result in rows:
        writer.writerow(_estimate_row(title, result))


# ---------------------------------------------------------------- subcommands


def cmd_ingest_usda(settings: Settings) -> int:
    out_dir = Path(settings.require("out", "--out"))
    source_paths = {
        Source.FOUNDATION: settings.get("foundation"),
        Source.SURVEY: settings.get("survey"),
        Source.SR_LEGACY: settings.get("sr_legacy"),
    }
    provided = {src: p for src, p in source_paths.items() if p}
    if not provided:
        raise ParameterError("ingest-usda needs at least one of --foundation/--survey/--sr-legacy")
    entries = []
    for source, path in provided.items():
        loaded = load_source_path(path, source)
        logger.info("%s: %d raw entries from %s", source.value, len(loaded), path)
        entries.extend(loaded)
    db = build_food_db(entries)
    counts = ", ".join(f"{src.value}={count}" for src, count in db.counts_by_source().items() if count)
    logger.info("food db: %d records (%s)", len(db), counts)
    with atomic_write(out_dir / "food_db.tsv") as fh:
        write_food_db(db, fh)
    write_manifest(
        out_dir,
        "ingest-usda",
        settings.echo(["foundation", "survey", "sr_legacy"]),
        {src.value: str(p) for src, p in provided.items() if Path(p).is_file()},
    )
    return 0


def cmd_build_index(settings: Settings) -> int:
    out_dir = Path(settings.require("out", "--out"))
    db_path = settings.require("food_db", "--food-db")
    store_path = settings.require("embeddings", "--embeddings")
    db = read_food_db(db_path)
    store = read_store(store_path)
    index = build_index(store, db)
    records = [
        EmbeddingRecord(food_id, index.matrix[row])
        for row, food_id in enumerate(index.ids)
    ]
    normalized = EmbeddingStore(index.dimension, records, store.model_tag)
    with atomic_write(out_dir / "index.nteb", "wb") as fh:
        write_store(normalized, fh)
    logger.info("index: %d vectors, dimension %d", len(index), index.dimension)
    write_manifest(
        out_dir,
        "build-index",
        settings.echo(["food_db", "embeddings"]),
        {"food_db": db_path, "embeddings": store_path},
    )
    return 0


def cmd_estimate(settings: Settings) -> int:
    title = settings.require("title", "--title")
    index, db = _load_index(settings)
    provider = _build_provider(settings, [title])
    result = estimate_title(title, index, db, provider, settings.estimator_config())
    _write_batch_csv([(title, result)], sys.stdout)
    return 0


def cmd_estimate_batch(settings: Settings) -> int:
    titles_path = settings.require("titles", "--titles")
    titles = [line for line in _read_lines(titles_path) if line.strip()]
    index, db = _load_index(settings)
    provider = _build_provider(settings, titles)
    rows = estimate_batch(titles, index, db, provider, settings.estimator_config(), settings.workers())
    out = settings.get("out")
    if out is None:
        _write_batch_csv(rows, sys.stdout)
        return 0
    out_dir = Path(out)
    with atomic_write(out_dir / "estimates.csv") as fh:
        _write_batch_csv(rows, fh)
    write_manifest(
        out_dir,
        "estimate-batch",
        settings.echo(["titles", "food_db", "embeddings", "n", "t", "m", "workers"]),
        {"titles": titles_path, "food_db": settings.get("food_db"), "embeddings": settings.get("embeddings")},
    )
    return 0


def _parse_grid(settings: Settings) -> GridSpec:
    ns = settings.get("grid_ns")
    ts = settings.get("grid_ts")
    ms = settings.get("grid_ms")
    if ns is None and ts is None and ms is None:
        return DEFAULT_GRID
    return GridSpec(
        ns=tuple(int(v) for v in str(ns).split(",")) if ns else DEFAULT_GRID.ns,
        ts=tuple(float(v) for v in str(ts).split(",")) if ts else DEFAULT_GRID.ts,
        ms=tuple(Aggregation(v) for v in str(ms).split(",")) if ms else DEFAULT_GRID.ms,
    )


def _split_from_settings(settings: Settings):
    recipes = read_labeled_csv(settings.require("dataset", "--dataset"))
    train, test = split_dataset(recipes, float(settings.get("train_fraction")), int(settings.get("seed")))
    logger.info("dataset: %d recipes -> %d train / %d test", len(recipes), len(train), len(test))
    return train, test


def cmd_tune(settings: Settings) -> int:
    out_dir = Path(settings.require("out", "--out"))
    train, test = _split_from_settings(settings)
    mean, std = dataset_stats(train)
    logger.info("train calories: mean %.2f, std %.2f", mean, std)
    index, db = _load_index(settings)
    provider = _build_provider(settings, [r.title for r in train] + [r.title for r in test])
    ctx = EstimationContext(index, db, provider)
    grid = _parse_grid(settings)
    results = grid_search(train, grid, ctx)
    best = results[0]
    logger.info(
        "best config: n=%d t=%s m=%s train_rmse=%.4f coverage=%.4f",
        best.config.n, best.config.t, best.config.m.value, best.train_rmse, best.coverage,
    )
    test_summary = None
    if test:
        test_rmse, test_coverage = evaluate(best.config, test, ctx)
        logger.info("test rmse=%.4f coverage=%.4f", test_rmse, test_coverage)
        test_summary = (best.config, test_rmse, test_coverage)
    with atomic_write(out_dir / "tuning_report.csv") as fh:
        write_tuning_report(results, test_summary, fh)
    write_manifest(
        out_dir,
        "tune",
        settings.echo(["dataset", "food_db", "embeddings", "train_fraction", "seed"]),
        {
            "dataset": settings.get("dataset"),
            "food_db": settings.get("food_db"),
            "embeddings": settings.get("embeddings"),
        },
    )
    return 0


def cmd_evaluate(settings: Settings) -> int:
    _, test = _split_from_settings(settings)
    if not test:
        raise ParameterError("train fraction leaves no test split to evaluate")
    index, db = _load_index(settings)
    provider = _build_provider(settings, [r.title for r in test])
    ctx = EstimationContext(index, db, provider)
    cfg = settings.estimator_config()
    test_rmse, coverage = evaluate(cfg, test, ctx)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["n", "t", "m", "test_rmse", "coverage"])
    writer.writerow([cfg.n, cfg.t, cfg.m.value, test_rmse, coverage])
    return 0


def cmd_baseline_eval(settings: Settings) -> int:
    _, test = _split_from_settings(settings)
    if not test:
        raise ParameterError("train fraction leaves no test split to evaluate")
    client = HttpBaselineClient(
        url=settings.require("url", "--url"),
        api_key_env=str(settings.get("api_key_env", "BASELINE_API_KEY")),
        query_param=str(settings.get("query_param", "query")),
    )
    score = baseline_eval(client, test, cache_dir=settings.get("cache"))
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["rmse", "titles"])
    writer.writerow([score, len(test)])
    return 0


def _submission_to_json(sub: Submission) -> dict:
    return {
        "id": sub.id,
        "author": sub.author,
        "created_utc": sub.created_utc,
        "raw_title": sub.raw_title,
        "tag": sub.tag.value,
        "clean_title": sub.clean_title,
    }


def _submission_from_json(obj: dict) -> Submission:
    return Submission(
        id=obj["id"],
        author=obj["author"],
        created_utc=float(obj["created_utc"]),
        raw_title=obj["raw_title"],
        tag=Tag(obj["tag"]),
        clean_title=obj["clean_title"],
    )


def _load_submissions(settings: Settings) -> tuple[list[Submission], dict, dict[str, str]]:
    filtered_path = settings.get("filtered")
    if filtered_path:
        subs = [_submission_from_json(json.loads(line)) for line in _read_lines(filtered_path) if line]
        return subs, {"filtered": str(filtered_path)}, {"filtered": str(filtered_path)}
    dumps = settings.get("dump")
    if not dumps:
        raise ParameterError("need --dump (repeatable) or --filtered")
    if isinstance(dumps, str):
        dumps = [dumps]
    parsed = parse_many(dumps, settings.corpus_config())
    subs, report = apply_filters(parsed.records, settings.corpus_config())
    stats = {
        "total_lines": parsed.total_lines,
        "malformed": parsed.malformed,
        "out_of_range": parsed.out_of_range,
        "deleted": report.deleted,
        "untagged": report.untagged,
        "empty_title": report.empty_title,
        "duplicate": report.duplicate,
        "kept": report.kept,
    }
    logger.info("corpus filter: %s", stats)
    return subs, stats, {f"dump_{i}": str(p) for i, p in enumerate(dumps)}


def cmd_corpus_filter(settings: Settings) -> int:
    out_dir = Path(settings.require("out", "--out"))
    subs, stats, inputs = _load_submissions(settings)
    with atomic_write(out_dir / "filtered.jsonl") as fh:
        for sub in subs:
            fh.write(json.dumps(_submission_to_json(sub), sort_keys=True) + "\n")
    with atomic_write(out_dir / "filter_report.json") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(out_dir, "corpus-filter", settings.echo(["min_year", "max_year"]), inputs)
    return 0


def cmd_corpus_analyze(settings: Settings) -> int:
    out_dir = Path(settings.require("out", "--out"))
    subs, stats, inputs = _load_submissions(settings)
    activity = weekly_activity(subs)
    with atomic_write(out_dir / "weekly_activity.csv") as fh:
        write_weekly_activity(activity, fh)

    titles = [sub.clean_title for sub in subs]
    index, db = _load_index(settings)
    provider = _build_provider(settings, titles)
    rows = estimate_batch(titles, index, db, provider, settings.estimator_config(), settings.workers())
    estimates = {sub.id: result for sub, (_, result) in zip(subs, rows)}
    nutrients = weekly_medians(subs, estimates)
    with atomic_write(out_dir / "weekly_nutrients.csv") as fh:
        write_weekly_nutrients(nutrients, fh)
    write_manifest(
        out_dir,
        "corpus-analyze",
        settings.echo(["food_db", "embeddings", "n", "t", "m", "min_year", "max_year"]),
        {**inputs, "food_db": settings.get("food_db"), "embeddings": settings.get("embeddings")},
    )
    return 0


def _read_csv_rows(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return [row for row in csv.DictReader(fh) if not row.get("week", "").startswith("#")]


def cmd_emit_figures(settings: Settings) -> int:
    out_dir = Path(settings.require("out", "--out"))
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    inputs = {}
    activity_path = settings.get("activity")
    if activity_path:
        rows = _read_csv_rows(activity_path)
        weeks = [r["week"] for r in rows]
        fig, ax = plt.subplots(figsize=(10, 4))
        ax.plot(weeks, [int(r["posts"]) for r in rows], label="posts")
        ax.plot(weeks, [int(r["unique_authors"]) for r in rows], label="unique authors")
        step = max(1, len(weeks) // 10)
        ax.set_xticks(range(0, len(weeks), step))
        ax.tick_params(axis="x", rotation=45)
        ax.set_ylabel("per week")
        ax.legend()
        fig.tight_layout()
        with atomic_write(out_dir / "weekly_activity.png", "wb") as fh:
            fig.savefig(fh, format="png")
        plt.close(fig)
        inputs["activity"] = str(activity_path)

    nutrients_path = settings.get("nutrients")
    if nutrients_path:
        rows = _read_csv_rows(nutrients_path)
        weeks = [r["week"] for r in rows]
        fig, axes = plt.subplots(2, 2, figsize=(12, 7), sharex=True)
        columns = ["calories_median", "protein_median", "fat_median", "carbs_median"]
        for ax, column in zip(axes.flat, columns):
            values = [float(r[column]) if r[column] else None for r in rows]
            ax.plot(weeks, values)
            ax.set_title(column.replace("_median", " median (per 100 g)"))
            step = max(1, len(weeks) // 8)
            ax.set_xticks(range(0, len(weeks), step))
            ax.tick_params(axis="x", rotation=45)
        fig.tight_layout()
        with atomic_write(out_dir / "weekly_nutrients.png", "wb") as fh:
            fig.savefig(fh, format="png")
        plt.close(fig)
        inputs["nutrients"] = str(nutrients_path)

    if not inputs:
        raise ParameterError("emit-figures needs --activity and/or --nutrients")
    write_manifest(out_dir, "emit-figures", settings.echo([]), inputs)
    return 0


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its keys")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="worker count (default: available parallelism)")
    common.add_argument("--seed", type=int, help="shuffle seed (default 0)")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    est = argparse.ArgumentParser(add_help=False)
    est.add_argument("--food-db", dest="food_db", help="food db TSV from ingest-usda")
    est.add_argument("--embeddings", help="food-name embeddings (NTEB)")
    est.add_argument("--query-embeddings", dest="query_embeddings", help="precomputed query embeddings (NTEB)")
    est.add_argument("--provider-cmd", dest="provider_cmd", help="external embedding provider command line")
    est.add_argument("--titles-file", dest="titles_file", help="line-per-title key file for a line-keyed store")
    est.add_argument("--n", type=int, help="neighbor count")
    est.add_argument("--t", type=float, help="similarity threshold")
    est.add_argument("--m", choices=[m.value for m in Aggregation], help="aggregation")

    parser = argparse.ArgumentParser(prog="nutrimatch", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")

    p = sub.add_parser("ingest-usda", parents=[common], help="build the food db from USDA exports")
    p.add_argument("--foundation", help="Foundation Foods export (dir or combined CSV)")
    p.add_argument("--survey", help="Survey (FNDDS) export")
    p.add_argument("--sr-legacy", dest="sr_legacy", help="SR Legacy export")
    p.set_defaults(func=cmd_ingest_usda)

    p = sub.add_parser("build-index", parents=[common, est], help="validate and normalize food embeddings")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("estimate", parents=[common, est], help="estimate one title")
    p.add_argument("--title", help="food title")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("estimate-batch", parents=[common, est], help="estimate a file of titles")
    p.add_argument("--titles", help="input file, one title per line")
    p.set_defaults(func=cmd_estimate_batch)

    p = sub.add_parser("tune", parents=[common, est], help="grid-search (n, t, m) on a labeled dataset")
    p.add_argument("--dataset", help="labeled CSV: title,calories_per_100g")
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--grid-ns", dest="grid_ns", help="comma-separated n values")
    p.add_argument("--grid-ts", dest="grid_ts", help="comma-separated t values")
    p.add_argument("--grid-ms", dest="grid_ms", help="comma-separated aggregation names")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("evaluate", parents=[common, est], help="score one config on the test split")
    p.add_argument("--dataset", help="labeled CSV: title,calories_per_100g")
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline-eval", parents=[common], help="score an external estimator on the test split")
    p.add_argument("--dataset", help="labeled CSV: title,calories_per_100g")
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--url", help="baseline endpoint URL")
    p.add_argument("--api-key-env", dest="api_key_env", help="env var holding the API key")
    p.add_argument("--query-param", dest="query_param", help="query-string parameter name")
    p.add_argument("--cache", help="response cache directory")
    p.set_defaults(func=cmd_baseline_eval)

    p = sub.add_parser("corpus-filter", parents=[common], help="parse and filter submission dumps")
    p.add_argument("--dump", action="append", help="line-delimited JSON dump (repeatable)")
    p.add_argument("--min-year", dest="min_year", type=int)
    p.add_argument("--max-year", dest="max_year", type=int)
    p.set_defaults(func=cmd_corpus_filter)

    p = sub.add_parser("corpus-analyze", parents=[common, est], help="weekly activity and nutrient medians")
    p.add_argument("--dump", action="append", help="line-delimited JSON dump (repeatable)")
    p.add_argument("--filtered", help="filtered.jsonl from corpus-filter")
    p.add_argument("--min-year", dest="min_year", type=int)
    p.add_argument("--max-year", dest="max_year", type=int)
    p.set_defaults(func=cmd_corpus_analyze)

    p = sub.add_parser("emit-figures", parents=[common], help="plot the weekly series CSVs")
    p.add_argument("--activity", help="weekly_activity.csv")
    p.add_argument("--nutrients", help="weekly_nutrients.csv")
    p.set_defaults(func=cmd_emit_figures)

    return parser


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_help(sys.stderr)
        return 2
    args = parser.parse_args(argv)
    if getattr(args, "func", None) is None:
        parser.print_help(sys.stderr)
        return 2
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        settings = Settings(args)
        return args.func(settings)
    except NutrimatchError as exc:
        logger.error("%s", exc)
        return 1
    except OSError as exc:
        logger.error("%s", exc)
        return 1


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()

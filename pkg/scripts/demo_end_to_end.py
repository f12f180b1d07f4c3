"""Run the whole pipeline on a small synthetic workspace.

Builds a fake food export plus pseudo-random embeddings, then drives the CLI
through ingest, index build, single and batch estimation, tuning, corpus
filtering, weekly analysis, and figure rendering. Everything lands in one
directory (default ./demo_run) so the artifacts are easy to poke at.
"""

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from nutrimatch import cli
from nutrimatch.store import EmbeddingRecord, EmbeddingStore, write_store
from nutrimatch.usda import normalize_query_title, normalize_usda_name, read_food_db

FOODS = [
    ("Cheese, cheddar", 403, 24.9, 33.1, 1.3),
    ("Chicken, broilers or fryers, breast, grilled", 165, 31.0, 3.6, 0.0),
    ("Rice, white, cooked", 130, 2.7, 0.3, 28.2),
    ("Soup, tomato, canned", 33, 0.8, 0.7, 7.2),
    ("Bread, whole-wheat", 247, 13.0, 4.2, 41.0),
    ("Salmon, Atlantic, baked", 206, 22.1, 12.4, 0.0),
    ("Beans, black, boiled", 132, 8.9, 0.5, 23.7),
    ("Pasta, cooked", 158, 5.8, 0.9, 30.9),
    ("Eggs, scrambled", 149, 10.0, 11.0, 1.6),
    ("Potatoes, mashed", 113, 2.0, 4.2, 16.9),
    ("Yogurt, plain, whole milk", 61, 3.5, 3.3, 4.7),
    ("Beef, ground, 85% lean, pan-browned", 250, 25.9, 15.4, 0.0),
]

NUTRIENT_IDS = {"calories": 1008, "protein": 1003, "fat": 1004, "carbohydrates": 1005}

DIMENSION = 16

RECIPES = [
    ("Sharp cheddar on toast", "Cheese, cheddar", 390.0),
    ("Grilled chicken breast", "Chicken, broilers or fryers, breast, grilled", 170.0),
    ("Simple white rice bowl", "Rice, white, cooked", 128.0),
    ("Creamy tomato soup", "Soup, tomato, canned", 40.0),
    ("Whole wheat sandwich bread", "Bread, whole-wheat", 250.0),
    ("Baked salmon fillet", "Salmon, Atlantic, baked", 210.0),
    ("Black bean stew", "Beans, black, boiled", 140.0),
    ("Weeknight pasta", "Pasta, cooked", 155.0),
    ("Scrambled eggs with chives", "Eggs, scrambled", 152.0),
    ("Buttery mashed potatoes", "Potatoes, mashed", 120.0),
    ("Plain yogurt parfait", "Yogurt, plain, whole milk", 66.0),
    ("Pan browned ground beef", "Beef, ground, 85% lean, pan-browned", 245.0),
    ("Cheddar mac and cheese", "Cheese, cheddar", 360.0),
    ("Chicken and rice", "Chicken, broilers or fryers, breast, grilled", 150.0),
    ("Tomato soup with bread", "Soup, tomato, canned", 80.0),
    ("Salmon rice bowl", "Salmon, Atlantic, baked", 180.0),
    ("Bean and egg scramble", "Eggs, scrambled", 145.0),
    ("Mashed potato bake", "Potatoes, mashed", 125.0),
]

TAGS = ["Homemade", "I ate", "Pro/Chef"]


def write_usda_export(path: Path) -> None:
    lines = ["fdc_id,description,nutrient_id,amount"]
    for fdc_id, (description, *amounts) in enumerate(FOODS, start=1):
        for nutrient_id, amount in zip(NUTRIENT_IDS.values(), amounts):
            lines.append(f'{fdc_id},"{description}",{nutrient_id},{amount}')
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def food_vector(rng_seed: str) -> np.ndarray:
    rng = np.random.default_rng(abs(hash(rng_seed)) % 2**32)
    return rng.normal(size=DIMENSION).astype(np.float32)


def run(argv) -> int:
    code = cli.run(argv)
    if code != 0:
        print(f"step failed ({code}): {' '.join(argv)}", file=sys.stderr)
    return code


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_run", help="workspace directory")
    args = parser.parse_args()
    ws = Path(args.out)
    ws.mkdir(parents=True, exist_ok=True)

    export = ws / "foundation_export.csv"
    write_usda_export(export)
    if run(["ingest-usda", "--foundation", str(export), "--out", str(ws)]):
        return 1

    db = read_food_db(ws / "food_db.tsv")
    vectors = {rec.id: food_vector(rec.id) for rec in db}
    food_store = EmbeddingStore(
        DIMENSION, [EmbeddingRecord(fid, vec) for fid, vec in sorted(vectors.items())], "demo-model/1"
    )
    write_store(food_store, ws / "embeddings.nteb")
    if run(["build-index", "--food-db", str(ws / "food_db.tsv"), "--embeddings", str(ws / "embeddings.nteb"), "--out", str(ws)]):
        return 1

    # query vectors: the source food's vector plus a deterministic nudge
    noise = np.random.default_rng(0)
    query_records = []
    for title, source_name, _ in RECIPES:
        base = vectors[normalize_usda_name(source_name)]
        jitter = noise.normal(scale=0.05, size=DIMENSION).astype(np.float32)
        query_records.append(EmbeddingRecord(normalize_query_title(title), base + jitter))
    write_store(EmbeddingStore(DIMENSION, query_records, "demo-model/1"), ws / "queries.nteb")

    base_flags = [
        "--food-db", str(ws / "food_db.tsv"),
        "--embeddings", str(ws / "embeddings.nteb"),
        "--query-embeddings", str(ws / "queries.nteb"),
    ]
    if run(["estimate", *base_flags, "--title", RECIPES[0][0], "--n", "5"]):
        return 1

    titles_file = ws / "titles.txt"
    titles_file.write_text("".join(f"{title}\n" for title, _, _ in RECIPES), encoding="utf-8")
    if run(["estimate-batch", *base_flags, "--titles", str(titles_file), "--out", str(ws)]):
        return 1

    dataset = ws / "recipes.csv"
    dataset.write_text(
        "title,calories_per_100g\n" + "".join(f"{t},{c}\n" for t, _, c in RECIPES), encoding="utf-8"
    )
    if run(["tune", *base_flags, "--dataset", str(dataset), "--out", str(ws),
            "--grid-ns", "1,5,10", "--grid-ts", "0.0,0.5", "--grid-ms", "mean,median,weighted_mean"]):
        return 1

    dump = ws / "dump.jsonl"
    stamp = datetime(2020, 11, 2, tzinfo=timezone.utc).timestamp()
    with open(dump, "w", encoding="utf-8") as fh:
        for i, (title, _, _) in enumerate(RECIPES * 4):
            record = {
                "id": f"p{i:03d}",
                "author": f"user{i % 9}",
                "title": f"[{TAGS[i % 3]}] {title}",
                "created_utc": stamp + i * 43_200,  # two posts per day
            }
            fh.write(json.dumps(record) + "\n")
    if run(["corpus-filter", "--dump", str(dump), "--out", str(ws)]):
        return 1
    if run(["corpus-analyze", *base_flags, "--filtered", str(ws / "filtered.jsonl"), "--out", str(ws)]):
        return 1
    if run(["emit-figures", "--activity", str(ws / "weekly_activity.csv"),
            "--nutrients", str(ws / "weekly_nutrients.csv"), "--out", str(ws)]):
        return 1

    print(f"\ndemo artifacts in {ws.resolve()}:")
    for path in sorted(ws.iterdir()):
        print(f"  {path.name}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

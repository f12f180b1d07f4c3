"""Reproduce the published tuning run on the real data.

Expects four artifacts you have to fetch or build yourself (none ship with
the repository):

  * the labeled recipe dataset as CSV with columns title,calories_per_100g
  * the deduplicated food database TSV (see the ingest-usda subcommand)
  * food-name embeddings as NTEB (ids = normalized food names)
  * recipe-title embeddings as NTEB (ids = line numbers into the dataset
    order, or normalized titles)

With all four present this runs the full 96-config sweep with the default
80/20 split at seed 0 and writes tuning_report.csv. Expected outcome: best
config (n=50, t=0.0, weighted_mean), train RMSE near 114.76, test RMSE near
116.78, within a few calories depending on the embedding model revision.
"""

import argparse
import sys
from pathlib import Path

from nutrimatch import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--dataset", required=True, help="labeled recipe CSV")
    parser.add_argument("--food-db", required=True, help="food database TSV")
    parser.add_argument("--embeddings", required=True, help="food-name NTEB store")
    parser.add_argument("--query-embeddings", required=True, help="recipe-title NTEB store")
    parser.add_argument("--out", default="tuning_run", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    for name in ("dataset", "food_db", "embeddings", "query_embeddings"):
        path = Path(getattr(args, name))
        if not path.is_file():
            print(f"missing {name.replace('_', '-')}: {path}", file=sys.stderr)
            print("fetch or build the inputs first; see the module docstring", file=sys.stderr)
            return 1

    return cli.run(
        [
            "tune",
            "--dataset", args.dataset,
            "--food-db", args.food_db,
            "--embeddings", args.embeddings,
            "--query-embeddings", args.query_embeddings,
            "--out", args.out,
            "--seed", str(args.seed),
        ]
    )


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line entry point: `embed-export export --input <txt> --output <nteb>`."""

import argparse
import logging
import sys
from typing import Sequence

from .errors import ExportError
from .exporter import DEFAULT_BATCH_SIZE, DEFAULT_MODEL, ExportJob, export_embeddings, read_input_lines

logger = logging.getLogger("embed_export")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embed-export", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    p = sub.add_parser("export", help="embed one text file into an NTEB store")
    p.add_argument("--input", required=True, help="UTF-8 text, one entry per line")
    p.add_argument("--output", required=True, help="NTEB file to write")
    p.add_argument("--keys", help="file of record ids, one per input line, replacing line-number ids")
    p.add_argument("--model", default=DEFAULT_MODEL, help=f"model identifier (default {DEFAULT_MODEL})")
    p.add_argument("--revision", help="model revision hash to pin; recorded in the model tag")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=DEFAULT_BATCH_SIZE)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_help(sys.stderr)
        return 2
    args = parser.parse_args(argv)
    if args.subcommand is None:
        parser.print_help(sys.stderr)
        return 2
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        job = ExportJob(
            input_path=args.input,
            output_path=args.output,
            model_id=args.model,
            revision=args.revision,
            batch_size=args.batch_size,
            keys=read_input_lines(args.keys) if args.keys else None,
        )
        result = export_embeddings(job)
    except ExportError as exc:
        logger.error("%s", exc)
        return 1
    except OSError as exc:
        logger.error("%s", exc)
        return 1
    logger.info("wrote %d records (%d bytes)", result.count, result.bytes_written)
    return 0


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()

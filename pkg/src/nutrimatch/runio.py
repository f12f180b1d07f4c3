"""Reproducible run output: atomic file writes and machine-readable manifests."""

from __future__ import annotations

import hashlib
import json
import os
import sys
import tempfile
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path


@contextmanager
def atomic_write(path, mode: str = "w"):
    """Write to a sibling temp file, then rename over the target.

    Readers never observe a partial file; a crash leaves the old content
    (or nothing) in place.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    kwargs = {} if "b" in mode else {"encoding": "utf-8", "newline": ""}
    fd, temp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(temp_name, path)
    except BaseException:
        try:
            os.unlink(temp_name)
        except OSError:
            pass
        raise


def file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(out_dir, subcommand: str, config: dict, inputs: dict[str, str]) -> Path:
    """Drop `<subcommand>.manifest.json` next to a run's outputs.

    Records the config (and its hash), a sha256 per input file, and tool
    versions. The timestamp is the only field allowed to vary between
    reruns with identical inputs.
    """
    from . import __version__

    manifest = {
        "subcommand": subcommand,
        "config": config,
        "config_sha256": config_hash(config),
        "inputs": {
            name: {"path": str(path), "sha256": file_digest(path)}
            for name, path in inputs.items()
            if path and Path(path).is_file()
        },
        "versions": {
            "tool": __version__,
            "python": sys.version.split()[0],
        },
        "created": datetime.now(timezone.utc).isoformat(),
    }
    out_path = Path(out_dir) / f"{subcommand}.manifest.json"
    with atomic_write(out_path) as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return out_path

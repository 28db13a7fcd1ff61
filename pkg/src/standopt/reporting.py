"""CSV tables and run manifests with stable, round-trippable formatting.

Every table is written with a fixed header, one row per record, floats in
shortest round-trip notation, and a plain "\n" line terminator, so a given
set of rows always produces byte-identical files. The run manifest is a JSON
document recording what produced a result directory: the configuration and
its fingerprint, the seed, package and interpreter versions, and wall time.
"""

from __future__ import annotations

import csv
import json
import platform
from pathlib import Path

import numpy as np

from . import __version__
from .config import ModelConfig, config_fingerprint, config_to_dict

__all__ = ["format_cell", "write_csv", "read_csv", "write_manifest"]


def format_cell(value) -> str:
    """Text form of one CSV cell; floats keep full round-trip precision."""
    if isinstance(value, (np.floating, np.integer)):
        value = value.item()
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_csv(path, header, rows, sort_key=None) -> Path:
    """Write dict rows under a fixed header.

    ``rows`` is an iterable of mappings; every header field must be present
    in each row. With ``sort_key`` the rows are ordered by that function of
    the row, making the output independent of assembly order.
    """
    path = Path(path)
    rows = list(rows)
    if sort_key is not None:
        rows.sort(key=sort_key)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            missing = [name for name in header if name not in row]
            if missing:
                raise ValueError(f"row is missing fields {missing}")
            writer.writerow([format_cell(row[name]) for name in header])
    return path


def read_csv(path):
    """Header list and rows (as string-valued dicts) of one CSV table."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [dict(zip(header, line)) for line in reader]
    return header, rows


def write_manifest(path, cfg: ModelConfig, seed, wall_time_s: float,
                   command: str = None, extra: dict = None) -> Path:
    """Record how a result directory was produced."""
    data = {
        "command": command,
        "config_fingerprint": config_fingerprint(cfg),
        "config": config_to_dict(cfg),
        "seed": seed,
        "versions": {
            "standopt": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "wall_time_s": round(float(wall_time_s), 3),
    }
    if extra:
        data.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path

"""Byte-stable CSV and JSON output."""

from __future__ import annotations

import csv
import io
import json
import platform
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from .. import __version__


@dataclass
class Table:
    columns: list
    rows: list


def format_value(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def csv_text(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([format_value(x) for x in row])
    return buf.getvalue()


def jsonable(obj):
    """Plain-Python copy of ``obj``; complex numbers become ``[re, im]``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, allow_nan=False) + "\n"


def versions() -> dict:
    return {
        "sshbraid": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def manifest(config, summary: dict, tables: dict) -> dict:
    return {
        "config": config.as_dict(),
        "versions": versions(),
        "summary": summary,
        "tables": {name: {"columns": t.columns, "rows": t.rows} for name, t in tables.items()},
    }


def _write(path: Path, text: str):
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}", str(path)) from None


def emit(config, summary: dict, tables: dict) -> list:
    """Write the configured output files; returns the paths written.

    CSV output puts the first table at the output path and any further
    table next to it as ``<stem>_<name>.csv``. JSON output writes a single
    manifest.
    """
    if not config.output:
        return []
    path = Path(config.output)
    if config.format == "json":
        _write(path, dumps(manifest(config, summary, tables)))
        return [str(path)]
    written = []
    for i, (name, table) in enumerate(tables.items()):
        target = path if i == 0 else path.with_name(f"{path.stem}_{name}{path.suffix or '.csv'}")
        _write(target, csv_text(table))
        written.append(str(target))
    return written

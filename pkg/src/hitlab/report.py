"""Experiment reports rendered as CSV or JSON.

Both renderings carry the same metadata block: package version, command,
seed, grid description, a hash of the configuration and the configuration
itself, so an artifact can be regenerated exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field

from . import __version__


@dataclass
class Report:
    command: str
    config: dict
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)
    seed: int | None = None
    grid: str | None = None


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return x.item()
    return x


def config_hash(config: dict) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def metadata(report: Report) -> dict:
    return {
        "version": __version__,
        "command": report.command,
        "seed": report.seed,
        "grid": report.grid,
        "config_hash": config_hash(report.config),
        "config": _jsonable(report.config),
    }


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(_jsonable(v), sort_keys=True)
    return str(v)


def render_csv(report: Report) -> str:
    buf = io.StringIO()
    for key, value in metadata(report).items():
        text = json.dumps(value, sort_keys=True) if isinstance(value, (dict, list)) else format_value(value)
        buf.write(f"# {key}: {text}\n")
    buf.write(f"# summary: {json.dumps(_jsonable(report.summary), sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(report.columns)
    for row in report.rows:
        writer.writerow([format_value(row.get(c)) for c in report.columns])
    return buf.getvalue()


def render_json(report: Report) -> str:
    doc = {
        "metadata": metadata(report),
        "summary": _jsonable(report.summary),
        "columns": list(report.columns),
        "rows": [{c: _jsonable(r.get(c)) for c in report.columns} for r in report.rows],
    }
    return json.dumps(doc, indent=2) + "\n"


def emit_report(report: Report, fmt: str = "csv", path=None) -> str:
    """Render and write the report (stdout when ``path`` is None)."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    text = render_csv(report) if fmt == "csv" else render_json(report)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def read_csv_report(path) -> tuple[dict, list]:
    """Parse a CSV report back into (metadata, rows as dicts of strings)."""
    meta, lines = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# "):
                key, _, value = line[2:].rstrip("\n").partition(": ")
                meta[key] = value
            else:
                lines.append(line)
    rows = list(csv.DictReader(lines))
    return meta, rows

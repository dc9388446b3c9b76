"""File formats for pairs, spectra, traces and effectiveness reports.

CSV doubles are written with 17 significant digits and JSON uses Python's
shortest-round-trip float encoding, so every emitted file re-parses to
bit-identical values. Writes go through a temp file plus rename, so readers
never observe partial output. CSV files carry the run configuration as
leading ``# key = value`` comment lines; JSON files embed it as an object.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from typing import Iterable

import numpy as np

from .errors import ParseError

SPECTRUM_FIELDS = (
    "status",
    "psi",
    "norm_ratio",
    "gamma",
    "lambda_min",
    "lambda_bulk",
    "lambda_max",
    "kappa",
)
TRACE_FIELDS = ("step", "time", "loss") + SPECTRUM_FIELDS


def fmt(value) -> str:
    """Serialize one cell: floats at 17 significant digits, None empty."""
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_cell(text: str):
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        return text


# ---------------------------------------------------------------- pair files


def write_pairs_csv(path, pairs: Iterable) -> None:
    """Rows of ``dim, g_0..g_{D-1}, y_0..y_{D-1}``; all rows share one dim."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no pairs to write")
    dim = len(np.asarray(pairs[0][0]).reshape(-1))
    header = ["dim"] + [f"g_{i}" for i in range(dim)] + [f"y_{i}" for i in range(dim)]
    lines = [",".join(header)]
    for g, y in pairs:
        g = np.asarray(g, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if g.size != dim or y.size != dim:
            raise ValueError("all pairs must share the header dimension")
        lines.append(",".join([str(dim)] + [fmt(float(v)) for v in g] + [fmt(float(v)) for v in y]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_pairs_csv(path):
    """Parse a pair file into raw (g, y) array tuples; malformed rows raise
    ParseError with the offending line number."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for line_number, row in enumerate(reader, start=1):
            if not row or (row[0].startswith("#")):
                continue
            if header is None:
                header = row
                if header[0] != "dim":
                    raise ParseError(path, line_number, "header must start with 'dim'")
                continue
            try:
                dim = int(row[0])
            except ValueError:
                raise ParseError(path, line_number, f"bad dim field {row[0]!r}") from None
            if len(row) != 1 + 2 * dim:
                raise ParseError(
                    path, line_number, f"expected {1 + 2 * dim} fields for dim {dim}, got {len(row)}"
                )
            try:
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ParseError(path, line_number, f"bad float: {exc}") from None
            rows.append((np.array(values[:dim]), np.array(values[dim:])))
    if header is None:
        raise ParseError(path, 0, "empty pair file")
    return rows


def write_pairs_json(path, pairs: Iterable) -> None:
    payload = [
        {
            "dim": int(np.asarray(g).reshape(-1).size),
            "g": [float(v) for v in np.asarray(g, dtype=float).reshape(-1)],
            "y": [float(v) for v in np.asarray(y, dtype=float).reshape(-1)],
        }
        for g, y in pairs
    ]
    atomic_write_text(path, json.dumps(payload, indent=1) + "\n")


def read_pairs_json(path):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None
    rows = []
    for k, entry in enumerate(payload):
        g = np.array(entry["g"], dtype=float)
        y = np.array(entry["y"], dtype=float)
        if g.size != entry["dim"] or y.size != entry["dim"]:
            raise ParseError(path, k, "vector lengths disagree with dim")
        rows.append((g, y))
    return rows


# -------------------------------------------------------- tabular emissions


def _config_lines(config: dict) -> list:
    return [f"# {key} = {fmt(value)}" for key, value in config.items()]


def write_table_csv(path, fields, rows, config: dict) -> None:
    lines = _config_lines(config)
    lines.append(",".join(fields))
    for row in rows:
        lines.append(",".join(fmt(row.get(f)) for f in fields))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_table_csv(path):
    """Returns (config dict, list of row dicts). Numeric cells come back as
    floats, empty cells as None."""
    config = {}
    rows = []
    fields = None
    with open(path, newline="") as fh:
        for line_number, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    config[key.strip()] = _parse_cell(value.strip())
                continue
            cells = next(csv.reader([line]))
            if fields is None:
                fields = cells
                continue
            if len(cells) != len(fields):
                raise ParseError(path, line_number, f"expected {len(fields)} cells, got {len(cells)}")
            rows.append({f: _parse_cell(c) for f, c in zip(fields, cells)})
    if fields is None:
        raise ParseError(path, 0, "no header row found")
    return config, rows


def write_table_json(path, fields, rows, config: dict) -> None:
    payload = {
        "config": config,
        "fields": list(fields),
        "rows": [{f: row.get(f) for f in fields} for row in rows],
    }
    atomic_write_text(path, json.dumps(payload, indent=1) + "\n")


def read_table_json(path):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None
    return payload["config"], payload["rows"]


def write_report(path, report: dict, config: dict, fmt_name: str) -> None:
    """Flat key/value report (effectiveness results and similar)."""
    if fmt_name == "json":
        atomic_write_text(path, json.dumps({"config": config, "report": report}, indent=1) + "\n")
        return
    lines = _config_lines(config)
    lines.append("key,value")
    for key, value in report.items():
        lines.append(f"{key},{fmt(value)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_report(path, fmt_name: str):
    if fmt_name == "json":
        with open(path) as fh:
            payload = json.load(fh)
        return payload["config"], payload["report"]
    config, rows = read_table_csv(path)
    report = {}
    for row in rows:
        value = row["value"]
        report[row["key"]] = value
    return config, report


# ----------------------------------------------------------------- charting


def svg_line_chart(series: dict, title: str, width: int = 720, height: int = 400) -> str:
    """Minimal self-contained SVG line chart; series maps label to (xs, ys)."""
    margin = 50
    xs_all = np.concatenate([np.asarray(xs, dtype=float) for xs, _ in series.values()])
    ys_all = np.concatenate([np.asarray(ys, dtype=float) for _, ys in series.values()])
    if xs_all.size == 0:
        raise ValueError("nothing to chart")
    x_lo, x_hi = float(xs_all.min()), float(xs_all.max())
    y_lo, y_hi = float(ys_all.min()), float(ys_all.max())
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def sx(x):
        return margin + (x - x_lo) / x_span * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y_lo) / y_span * (height - 2 * margin)

    palette = ["#1f6fb2", "#c23b22", "#3a923a", "#8c5aa0", "#b8860b", "#3b3b3b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{margin}" y="{height - margin + 16}" font-size="10">{x_lo:.4g}</text>',
        f'<text x="{width - margin}" y="{height - margin + 16}" text-anchor="end" '
        f'font-size="10">{x_hi:.4g}</text>',
        f'<text x="{margin - 4}" y="{height - margin}" text-anchor="end" font-size="10">{y_lo:.4g}</text>',
        f'<text x="{margin - 4}" y="{margin}" text-anchor="end" font-size="10">{y_hi:.4g}</text>',
    ]
    for k, (label, (xs, ys)) in enumerate(series.items()):
        color = palette[k % len(palette)]
        points = " ".join(
            f"{sx(float(x)):.2f},{sy(float(y)):.2f}" for x, y in zip(xs, ys)
        )
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.2"/>')
        parts.append(
            f'<text x="{width - margin + 4}" y="{margin + 14 * k}" font-size="10" '
            f'fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)

"""
Snapshots and reports.

A snapshot is one line of JSON (grid metadata, time, experiment id, format
version) terminated by a newline, followed by ``nx * ny`` little-endian
float64 values in row-major (x-major) order.

Reports are a JSON summary with sorted keys plus an optional CSV table.
Neither contains timestamps, so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

FORMAT = "zklab-snapshot"
VERSION = 1


class SnapshotError(OSError):
    """Malformed or incompatible snapshot file."""


def save_snapshot(path: str | Path, field: np.ndarray, grid, t: float = 0.0, experiment: str = "", config_hash: str = "") -> Path:
    field = np.asarray(field, dtype="<f8")
    if field.shape != grid.shape:
        raise ValueError(f"field shape {field.shape} does not match grid {grid.shape}")
    header = {
        "format": FORMAT,
        "version": VERSION,
        "nx": grid.nx,
        "ny": grid.ny,
        "X": grid.X,
        "L": grid.L,
        "t": float(t),
        "experiment": experiment,
        "config_hash": config_hash,
    }
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(field).tobytes(order="C"))
    return path


def load_snapshot(path: str | Path) -> tuple[np.ndarray, dict]:
    """Return ``(field, header)``; raises :class:`SnapshotError` on any inconsistency."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise SnapshotError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:nl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"{path}: unreadable header ({exc})") from None
    if header.get("format") != FORMAT:
        raise SnapshotError(f"{path}: not a {FORMAT} file")
    if header.get("version") != VERSION:
        raise SnapshotError(f"{path}: version {header.get('version')} unsupported (expected {VERSION})")
    nx, ny = int(header["nx"]), int(header["ny"])
    payload = raw[nl + 1 :]
    if len(payload) != nx * ny * 8:
        raise SnapshotError(f"{path}: payload has {len(payload)} bytes, header implies {nx * ny * 8}")
    field = np.frombuffer(payload, dtype="<f8").reshape(nx, ny).astype(float)
    return field, header


def _clean(value):
    """Convert numpy scalars/arrays to plain JSON values; non-finite floats become ``None``."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def table_csv(columns: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def emit_report(summary: dict, out_dir: str | Path, name: str, config_hash: str, table: tuple | None = None) -> dict:
    """Write ``<name>.json`` (and ``<name>.csv`` when ``table = (columns, rows)``).

    Returns the paths written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"experiment": name, "config_hash": config_hash, "result": _clean(summary)}
    paths = {"json": out / f"{name}.json"}
    paths["json"].write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    if table is not None:
        columns, rows = table
        paths["csv"] = out / f"{name}.csv"
        paths["csv"].write_text(f"# config_hash={config_hash}\n" + table_csv(columns, rows))
    return paths

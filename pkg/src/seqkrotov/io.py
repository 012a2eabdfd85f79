"""Trace CSV and summary JSON files.

Trace CSV columns (header always present, one row per iteration, ``n = 0`` is the
initial field)::

    n, fidelity, infidelity, J_value, alpha, grad_norm, ops, wall_ms

Floats are written with ``repr`` so that a file round-trips bit-exactly.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

__all__ = ["TRACE_COLUMNS", "write_trace_csv", "read_trace_csv", "to_jsonable", "write_json"]

TRACE_COLUMNS = ("n", "fidelity", "infidelity", "J_value", "alpha", "grad_norm", "ops", "wall_ms")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_trace_csv(path, trace):
    """Write an :class:`~seqkrotov.optimizer.OptimizationTrace` (or row iterable)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = trace.rows() if hasattr(trace, "rows") else trace
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_trace_csv(path):
    """Columns of a trace CSV as float arrays keyed by column name."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"trace file lacks columns {sorted(missing)}")
        data = {c: [] for c in TRACE_COLUMNS}
        for row in reader:
            for c in TRACE_COLUMNS:
                data[c].append(float(row[c]))
    return {c: np.array(v) for c, v in data.items()}


def to_jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path

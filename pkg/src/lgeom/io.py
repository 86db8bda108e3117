"""CSV and JSON writers with a fixed, versioned layout.

Every CSV starts with one comment line naming its kind and schema version,
followed by a header row. Floats are written with 12 significant digits so
identical runs produce identical bytes.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "fmt",
    "write_csv",
    "read_csv",
    "write_json",
    "write_profile",
    "write_curve",
    "write_volume_table",
    "write_certificate",
    "write_soliton",
]


def fmt(x):
    """Decimal text with 12 significant digits (ints and strings pass through)."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    # avoid "-0"
    return f"{x + 0.0:.12g}"


def write_csv(path, kind, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# lgeom {kind} v{SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    """``(kind, columns, rows)`` with rows as lists of strings."""
    with Path(path).open() as fh:
        first = fh.readline().strip()
        reader = csv.reader(fh)
        columns = next(reader)
        rows = list(reader)
    return first.split()[2], columns, rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return fmt(x) if not math.isfinite(x) else float(fmt(x))
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_profile(path, snapshot):
    """Warp profile ``(r, w)`` of a warped metric, ``w = sqrt(u)``."""
    return write_csv(path, "profile", ["r", "w"], zip(snapshot.rho, np.sqrt(snapshot.u)))


def write_curve(path, curve):
    d = curve.coords.shape[1]
    cols = ["s"] + [f"x{k}" for k in range(d)]
    return write_csv(path, "curve", cols, ([s, *x] for s, x in zip(curve.s, curve.coords)))


def write_volume_table(path, samples):
    return write_csv(
        path,
        "reduced_volume",
        ["tau", "V", "error", "tail", "flagged"],
        ([v.tau, v.value, v.quadrature_error, v.tail, v.flagged] for v in samples),
    )


def write_certificate(path, cert):
    return write_csv(
        path,
        "certificate",
        ["i", "tau_i", "L_gamma_i", "l_upper", "l_num", "C2"],
        ([r.i, r.tau, r.L_gamma, r.l_upper, r.l_num, cert.C2] for r in cert.rows),
    )


def write_soliton(path, report):
    cols = ["xi", "f"] + [f"e{k}_m{m}" for k, m in enumerate(report.multiplicities)]
    rows = ([x, f, *e] for x, f, e in zip(report.grid, report.potential, report.entries))
    return write_csv(path, "soliton", cols, rows)

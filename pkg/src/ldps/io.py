"""CSV and binary export of noise realizations and fields.

Binary layout (little-endian)::

    magic   4 bytes  b"LDPS"
    version u16      currently 1
    n_t     u32      number of rows
    n_x     u32      number of columns
    N       u32      truncation level (0 = untruncated / direct)
    seed    u64
    data    n_t * n_x float64, row-major
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"LDPS"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIQ")


def write_binary(path, data, n_modes: int | None = None, seed: int | None = None) -> None:
    a = np.ascontiguousarray(data, dtype="<f8")
    if a.ndim != 2:
        raise ValueError("binary dump expects a 2-d array")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, a.shape[0], a.shape[1], n_modes or 0, seed or 0))
        fh.write(a.tobytes(order="C"))


def read_binary(path) -> tuple[np.ndarray, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("file too short for LDPS header")
    magic, version, n_t, n_x, n_modes, seed = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * n_t * n_x:
        raise ValueError("payload size does not match header")
    data = np.frombuffer(body, dtype="<f8").reshape(n_t, n_x).copy()
    return data, {"version": version, "n_t": n_t, "n_x": n_x, "n_modes": n_modes, "seed": seed}


def _fmt(v: float) -> str:
    return repr(float(v))


def write_grid_csv(path, times, points, values, names=("t", "x", "value")) -> None:
    """One row per grid point: ``t, x, value``."""
    values = np.asarray(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for i, t in enumerate(times):
            for j, x in enumerate(points):
                w.writerow([_fmt(t), _fmt(x), _fmt(values[i, j])])


def read_grid_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([[float(c) for c in r] for r in rows])


def write_table_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(c) if isinstance(c, (float, np.floating)) else c for c in r])


def write_dat(path, x, y) -> None:
    """Two-column whitespace file for gnuplot."""
    with open(path, "w") as fh:
        for a, b in zip(x, y):
            fh.write(f"{_fmt(a)} {_fmt(b)}\n")


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True)

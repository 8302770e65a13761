"""Binary field snapshots plus CSV/JSON helpers.

Snapshot layout (all little-endian):
    5 bytes   magic b"NLKG1"
    5 x f64   grid kind (0 radial, 1 box, 2 radial line), component count,
              d, n (points per side, or radial/line nodes), extent (r_max, L or R)
    values    f64, component after component, lattice in lexicographic
              (C) order
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .field_core import BoxField, BoxGrid, RadialField, RadialGrid

MAGIC = b"NLKG1"
KIND_RADIAL, KIND_BOX, KIND_LINE = 0, 1, 2
_HEADER = np.dtype("<f8")


@dataclass
class LineSnapshot:
    """Radial data carried as w = r u on the odd line [-R, R)."""
    R: float
    n: int
    components: list


def _header(kind, ncomp, d, n, extent):
    return MAGIC + np.array([kind, ncomp, d, n, extent], dtype=_HEADER).tobytes()


def save_snapshot(path, *fields) -> Path:
    """Write one or more fields on the same grid (e.g. u0 and u1)."""
    if not fields:
        raise ValueError("nothing to save")
    first = fields[0]
    if isinstance(first, LineSnapshot):
        comps = [np.asarray(c, dtype="<f8") for c in first.components]
        head = _header(KIND_LINE, len(comps), 3, first.n, first.R)
    else:
        g = first.grid
        if any(f.grid != g for f in fields):
            raise ValueError("all components of a snapshot share one grid")
        if isinstance(g, RadialGrid):
            head = _header(KIND_RADIAL, len(fields), g.d, g.n, g.r_max)
        elif isinstance(g, BoxGrid):
            head = _header(KIND_BOX, len(fields), g.d, g.n, g.L)
        else:
            raise TypeError(f"cannot snapshot {type(first).__name__}")
        comps = [np.ascontiguousarray(f.values, dtype="<f8") for f in fields]
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(head)
            for c in comps:
                fh.write(c.tobytes(order="C"))
    except OSError as exc:
        raise OSError(f"writing snapshot {path}: {exc}") from exc
    return path


def load_snapshot(path):
    """Inverse of save_snapshot: a list of fields (or a LineSnapshot)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"reading snapshot {path}: {exc}") from exc
    if raw[:5] != MAGIC:
        raise ValueError(f"{path}: not an NLKG1 snapshot")
    kind, ncomp, d, n, extent = np.frombuffer(raw, dtype=_HEADER, count=5, offset=5)
    kind, ncomp, d, n = int(kind), int(ncomp), int(d), int(n)
    body = np.frombuffer(raw, dtype=_HEADER, offset=45)
    if kind == KIND_RADIAL:
        grid, shape = RadialGrid(d, float(extent), n), (n,)
    elif kind == KIND_BOX:
        grid = BoxGrid(d, float(extent), n)
        shape = grid.shape
    elif kind == KIND_LINE:
        grid, shape = None, (n,)
    else:
        raise ValueError(f"{path}: unknown grid kind {kind}")
    size = int(np.prod(shape))
    if body.size != ncomp * size:
        raise ValueError(f"{path}: expected {ncomp * size} values, found {body.size}")
    comps = [body[i * size:(i + 1) * size].reshape(shape).astype(float) for i in range(ncomp)]
    if kind == KIND_LINE:
        return LineSnapshot(float(extent), n, comps)
    cls = RadialField if kind == KIND_RADIAL else BoxField
    return [cls(grid, c) for c in comps]


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def write_json(path, summary: dict) -> Path:
    path = Path(path)
    try:
        with open(path, "w") as fh:
            json.dump(_plain(summary), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"writing {path}: {exc}") from exc
    return path


def write_csv(path, header, rows) -> Path:
    import csv
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                            for x in r])
    except OSError as exc:
        raise OSError(f"writing {path}: {exc}") from exc
    return path

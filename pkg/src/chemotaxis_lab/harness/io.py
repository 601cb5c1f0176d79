"""Output files: diagnostics CSV, JSON reports, raw field snapshots.

Layout of a run directory::

    diagnostics.csv      one row per output time, header CSV_HEADER
    report.json          run summary, keys sorted
    fields/<name>.bin    float64 little-endian, one value per cell
    fields/meta.json     grid spec, cell count, dtype, byte order, file list

Floats are written with ``repr`` so that values round-trip exactly and
reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from ..grid import Grid
from ..model import Diagnostics

CSV_HEADER = Diagnostics.CSV_HEADER
FIELD_DTYPE = "<f8"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_diagnostics_csv(path, rows: Iterable[Diagnostics]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CSV_HEADER)
        for d in rows:
            wr.writerow([_fmt(x) for x in d.row()])


def read_diagnostics_csv(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        data = np.array([[float(x) for x in row] for row in rd]).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def write_table_csv(path, header: list, rows: Iterable[Iterable]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; keep them readable and distinguishable
        return x if math.isfinite(x) else str(x)
    return obj


def write_json(path, payload: Mapping) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_fields(directory, fields: Mapping[str, np.ndarray], grid: Grid,
                 extra: Mapping | None = None) -> None:
    """Write each field as raw little-endian float64 plus a ``meta.json`` sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(fields):
        arr = np.ascontiguousarray(fields[name], dtype=FIELD_DTYPE)
        if arr.shape != (grid.n,):
            raise ValueError(f"field {name!r} has shape {arr.shape}, grid has {grid.n} cells")
        (directory / f"{name}.bin").write_bytes(arr.tobytes())
        entries.append({"name": name, "file": f"{name}.bin"})
    meta = {
        "grid": grid.to_dict(),
        "cells": grid.n,
        "shape": list(grid.shape),
        "dtype": "float64",
        "byte_order": "little",
        "layout": _layout(grid),
        "fields": entries,
    }
    if extra:
        meta.update(extra)
    write_json(directory / "meta.json", meta)


def _layout(grid: Grid) -> str:
    if grid.kind == "radial":
        return "cell i covers r in [i*dr, (i+1)*dr]"
    if grid.kind == "rect":
        return "flat index i*ny + j, x = (i+1/2)*dx, y = (j+1/2)*dy"
    return "flat index i*ntheta + k, r = (i+1/2)*dr, theta = (k+1/2)*dtheta"


def read_fields(directory) -> tuple[dict, dict[str, np.ndarray]]:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    out = {}
    for entry in meta["fields"]:
        out[entry["name"]] = np.frombuffer((directory / entry["file"]).read_bytes(),
                                           dtype=FIELD_DTYPE).copy()
    return meta, out

"""File formats: coefficient fields, corrector solutions and run manifests.

Field layout (both formats): values ordered direction-major over the face
arrays and row-major over cells, i.e. ``values.ravel()`` of an array of
shape ``(d, N, ..., N)``.

* ``.csv``: ``#``-prefixed header lines ``key: json-value`` (``format``,
  ``d``, ``N``, ``R``, ``law``, ``seed``) followed by rows
  ``direction,cell,value``.
* ``.bin``: raw little-endian float64 values, with the same header stored
  as JSON in ``<path>.json``.
"""
from __future__ import annotations

import contextlib
import json
import os
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .field import EdgeCoefficientField, FieldLaw
from .grid import PeriodicGrid

FIELD_FORMAT = "stochhom-field-v1"


@contextlib.contextmanager
def staged(path):
    """Write to ``<path>.partial`` and move it into place only on success.

    On error the partial file keeps its quarantine name.
    """
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    yield tmp
    os.replace(tmp, path)


def _header(fld: EdgeCoefficientField) -> dict:
    return {
        "format": FIELD_FORMAT,
        "d": fld.grid.d,
        "N": fld.grid.N,
        "R": fld.grid.R,
        "law": fld.law.to_dict() if fld.law is not None else None,
        "seed": fld.seed,
    }


def write_field(path, fld: EdgeCoefficientField) -> Path:
    path = Path(path)
    header = _header(fld)
    flat = fld.values.ravel()
    if path.suffix == ".bin":
        with staged(path) as tmp:
            flat.astype("<f8").tofile(tmp)
        with staged(path.with_name(path.name + ".json")) as tmp:
            tmp.write_text(json.dumps(header, indent=2))
        return path
    if path.suffix != ".csv":
        raise ValueError(f"field files must end in .csv or .bin, got {path.name}")
    n = fld.grid.size
    with staged(path) as tmp:
        with open(tmp, "w") as fh:
            for key, val in header.items():
                fh.write(f"# {key}: {json.dumps(val)}\n")
            fh.write("direction,cell,value\n")
            for j, v in enumerate(flat):
                fh.write(f"{j // n},{j % n},{float(v)!r}\n")
    return path


def read_field(path) -> EdgeCoefficientField:
    path = Path(path)
    if path.suffix == ".bin":
        header = json.loads(path.with_name(path.name + ".json").read_text())
        flat = np.fromfile(path, dtype="<f8")
    elif path.suffix == ".csv":
        header = {}
        rows = []
        with open(path) as fh:
            for line in fh:
                if line.startswith("#"):
                    key, _, val = line[1:].partition(":")
                    header[key.strip()] = json.loads(val)
                elif line.startswith("direction"):
                    continue
                elif line.strip():
                    rows.append(line.split(","))
        arr = np.array(rows, dtype=float).reshape(-1, 3)
        order = np.lexsort((arr[:, 1], arr[:, 0]))
        flat = arr[order, 2]
    else:
        raise ValueError(f"field files must end in .csv or .bin, got {path.name}")
    if header.get("format") != FIELD_FORMAT:
        raise ValueError(f"{path}: not a {FIELD_FORMAT} file")
    grid = PeriodicGrid(int(header["d"]), int(header["N"]), float(header["R"]))
    if flat.size != grid.d * grid.size:
        raise ValueError(f"{path}: expected {grid.d * grid.size} values, found {flat.size}")
    law = FieldLaw.from_dict(header["law"]) if header.get("law") else None
    return EdgeCoefficientField(grid, flat.reshape(grid.face_shape), law, header.get("seed"))


def write_solution(path, solution, fld: EdgeCoefficientField, extra: dict | None = None) -> Path:
    """Corrector values as CSV (``cell,chi``) plus a ``<path>.json`` metadata file."""
    path = Path(path)
    with staged(path) as tmp:
        with open(tmp, "w") as fh:
            fh.write("cell,chi\n")
            for j, v in enumerate(solution.chi.ravel()):
                fh.write(f"{j},{float(v)!r}\n")
    meta = {
        "method": solution.method,
        "T": None if np.isinf(solution.T) else solution.T,
        "xi": [float(x) for x in solution.xi],
        "seed": fld.seed,
        "grid": {"d": fld.grid.d, "N": fld.grid.N, "R": fld.grid.R},
        "report": {
            "iterations": solution.report.iterations,
            "residual_norm": solution.report.residual_norm,
            "converged": solution.report.converged,
        },
        "residual": solution.residual,
        "energy_average": solution.energy_average(fld),
    }
    meta.update(extra or {})
    with staged(path.with_name(path.name + ".json")) as tmp:
        tmp.write_text(json.dumps(meta, indent=2))
    return path


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(path, command: str, config: dict, outputs, started: str, status: str = "ok") -> Path:
    from . import __version__

    doc = {
        "tool": "stochhom",
        "version": __version__,
        "command": command,
        "status": status,
        "seed": config.get("seed"),
        "config": config,
        "outputs": [str(Path(p).name) for p in outputs],
        "started": started,
        "finished": now(),
    }
    path = Path(path)
    with staged(path) as tmp:
        tmp.write_text(json.dumps(doc, indent=2, default=_json_default))
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")

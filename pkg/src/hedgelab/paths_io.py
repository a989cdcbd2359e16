"""Path-batch serialization: CSV or .npy matrix plus a JSON sidecar.

Rows are paths, columns t_0..t_n; the sidecar (same filename + .json)
records whatever metadata the producer wants tied to the batch, config
and seed above all.  CSV floats are written with repr so a reload (or a
rerun) is bit-faithful.
"""

from __future__ import annotations

import json
import os

import numpy as np


def _sidecar(path) -> str:
    return str(path) + ".json"


def save_paths(path, paths: np.ndarray, meta: dict) -> None:
    paths = np.asarray(paths, dtype=float)
    if paths.ndim != 2:
        raise ValueError("paths must be a 2-D matrix")
    path = str(path)
    if path.endswith(".npy"):
        np.save(path, paths)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(f"t_{i}" for i in range(paths.shape[1])) + "\n")
            for row in paths:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(_sidecar(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def load_paths(path):
    """Returns (paths, meta); meta is {} when no sidecar exists."""
    path = str(path)
    if path.endswith(".npy"):
        paths = np.load(path)
    else:
        with open(path) as fh:
            header = fh.readline()
            if not header.startswith("t_0"):
                raise ValueError(f"{path}: not a path-batch CSV")
            paths = np.array([[float(v) for v in line.split(",")]
                              for line in fh if line.strip()])
    meta = {}
    if os.path.exists(_sidecar(path)):
        with open(_sidecar(path)) as fh:
            meta = json.load(fh)
    return paths, meta

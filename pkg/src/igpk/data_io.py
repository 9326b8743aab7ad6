"""CSV import/export for trajectory datasets and tidy result tables.

A dataset directory holds ``X0.csv``, ``X.csv``, ``XPlus.csv`` and
``meta.json``. Each matrix CSV has one row per matrix column with header
``traj,step,x1..xn``; reals are written with 17 significant digits so they
parse back bit-exactly.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, IoError
from .systems import TrajectoryDataset

__all__ = ["fmt", "read_dataset", "write_csv", "write_dataset"]

META_VERSION = 1


def fmt(v):
    """17-significant-digit text for reals, ``""`` for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if np.isnan(v):
            return ""
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _write_matrix(path, M, traj, step):
    n_x = M.shape[0]
    header = ["traj", "step"] + [f"x{d + 1}" for d in range(n_x)]
    rows = ([int(j), int(k), *M[:, c]] for c, (j, k) in enumerate(zip(traj, step)))
    write_csv(path, header, rows)


def write_dataset(directory, data: TrajectoryDataset, extra_meta=None):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n_T, N = data.n_T, data.N
    _write_matrix(d / "X0.csv", data.X0, np.arange(n_T), np.zeros(n_T, dtype=int))
    traj = np.repeat(np.arange(n_T), N)
    step = np.tile(np.arange(N), n_T)
    _write_matrix(d / "X.csv", data.X, traj, step)
    _write_matrix(d / "XPlus.csv", data.XPlus, traj, step + 1)
    meta = {
        "format_version": META_VERSION,
        "n_x": data.n_x,
        "n_T": n_T,
        "N": N,
        "dt": data.dt,
    }
    meta.update(data.meta)
    meta.update(extra_meta or {})
    with open(d / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return d


def _read_matrix(path, n_x):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if len(header) != n_x + 2:
            raise DimensionMismatch(f"{path}: expected {n_x} state columns")
        try:
            vals = [[float(v) for v in row[2:]] for row in r if row]
        except ValueError as exc:
            raise IoError(f"{path}: {exc}") from None
    return np.array(vals, dtype=np.float64).reshape(-1, n_x).T


def read_dataset(directory) -> TrajectoryDataset:
    d = Path(directory)
    try:
        with open(d / "meta.json") as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise IoError(f"{d / 'meta.json'}: malformed JSON ({exc})") from None
    n_x, N = int(meta["n_x"]), int(meta["N"])
    X0 = _read_matrix(d / "X0.csv", n_x)
    X = _read_matrix(d / "X.csv", n_x)
    XPlus = _read_matrix(d / "XPlus.csv", n_x)
    if X0.shape[1] != int(meta["n_T"]):
        raise DimensionMismatch("X0 column count disagrees with meta.json")
    extra = {k: v for k, v in meta.items() if k not in ("format_version", "n_x", "n_T", "N", "dt")}
    return TrajectoryDataset.from_matrices(X0, X, XPlus, N, meta.get("dt"), extra)

"""Trajectory files: a CSV of the path plus a JSON metadata sidecar."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .pde import ImpactTrajectory


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def write_trajectory(traj: ImpactTrajectory, stem, config: dict = None):
    """Write ``<stem>.csv`` with columns ``t, x_t, impact`` and ``<stem>.json``.

    The sidecar carries the trajectory metadata, the peak and plateau, and
    the resolved run configuration when given.
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path = stem.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x_t", "impact"])
        for t, x, i in zip(traj.times, traj.prices, traj.impact):
            w.writerow([repr(float(t)), repr(float(x)), repr(float(i))])
    meta = dict(traj.metadata)
    meta.update({"T": traj.T, "peak": traj.peak, "plateau": traj.plateau})
    if config is not None:
        meta["config"] = config
    json_path = write_json(stem.with_suffix(".json"), meta)
    return csv_path, json_path


def read_trajectory(stem) -> ImpactTrajectory:
    stem = Path(stem)
    data = np.loadtxt(stem.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
    meta = json.loads(stem.with_suffix(".json").read_text())
    return ImpactTrajectory(times=data[:, 0], impact=data[:, 2], T=meta.pop("T"),
                            peak=meta.pop("peak"), plateau=meta.pop("plateau"), metadata=meta)

"""Outlier pruning and fusion of accuracy-predictor ensembles.

Rows are per-method prediction vectors in percentage points, one column
per evaluation dataset.  Methods whose RMS deviation from the robust
centroid exceeds tau are removed one at a time; survivors are averaged.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

DEFAULT_TAU = 10.0


@dataclass(frozen=True)
class EnsembleReport:
    """Outcome of one fusion run, self-checking its own bookkeeping."""

    methods: tuple
    predictions: np.ndarray
    centroid: np.ndarray
    removed: tuple
    tau: float
    fused: np.ndarray
    degenerate: bool = field(default=False)

    def __post_init__(self) -> None:
        methods = tuple(str(m) for m in self.methods)
        P = np.ascontiguousarray(np.asarray(self.predictions, dtype=np.float64))
        cen = np.ascontiguousarray(np.asarray(self.centroid, dtype=np.float64))
        fused = np.ascontiguousarray(np.asarray(self.fused, dtype=np.float64))
        removed = tuple((str(m), float(d)) for m, d in self.removed)
        if P.ndim != 2 or P.shape[0] != len(methods):
            raise ValueError("one prediction row per method required")
        if len(set(methods)) != len(methods):
            raise ValueError("method names must be unique")
        if cen.shape != (P.shape[1],) or fused.shape != (P.shape[1],):
            raise ValueError("centroid and fused must have one value per dataset")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(cen)) and np.all(np.isfinite(fused))):
            raise ValueError("report values must be finite")
        removed_names = [m for m, _ in removed]
        if len(set(removed_names)) != len(removed_names) or not set(removed_names) <= set(methods):
            raise ValueError("removed entries must name distinct known methods")
        for m, dist in removed:
            if not dist > self.tau:
                raise ValueError(f"removed method {m!r} at distance {dist:g} <= tau")
        surv = [i for i, m in enumerate(methods) if m not in set(removed_names)]
        if not surv:
            raise ValueError("at least one method must survive")
        if np.max(np.abs(P[surv].mean(axis=0) - fused)) > 1e-9:
            raise ValueError("fused must equal the mean of surviving rows")
        for arr in (P, cen, fused):
            arr.flags.writeable = False
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "predictions", P)
        object.__setattr__(self, "centroid", cen)
        object.__setattr__(self, "fused", fused)
        object.__setattr__(self, "removed", removed)

    @property
    def survivors(self) -> tuple:
        gone = {m for m, _ in self.removed}
        return tuple(m for m in self.methods if m not in gone)


def centroid(predictions) -> np.ndarray:
    """Coordinate-wise median of the rows."""
    P = np.asarray(predictions, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] < 1:
        raise ValueError("need at least one prediction row")
    if not np.all(np.isfinite(P)):
        raise ValueError("predictions must be finite")
    return np.median(P, axis=0)


def omfd_fuse(
    predictions,
    methods: Sequence[str],
    tau: float = DEFAULT_TAU,
    fixed_centroid: Optional[Sequence[float]] = None,
) -> EnsembleReport:
    """Iteratively drop the farthest-out method, then average survivors.

    Distances are Euclidean over datasets divided by sqrt(T), so tau is in
    per-dataset percentage points.  `fixed_centroid` pins the reference
    point instead of re-deriving the median each round (manual workflow).
    """
    P = np.asarray(predictions, dtype=np.float64)
    names = tuple(str(m) for m in methods)
    if P.ndim != 2 or P.shape[0] < 1:
        raise ValueError("need at least one prediction row")
    if P.shape[0] != len(names):
        raise ValueError("one name per prediction row required")
    if not np.all(np.isfinite(P)):
        raise ValueError("predictions must be finite")
    if not tau > 0:
        raise ValueError("tau must be positive")
    T = P.shape[1]
    pinned = None
    if fixed_centroid is not None:
        pinned = np.asarray(fixed_centroid, dtype=np.float64)
        if pinned.shape != (T,) or not np.all(np.isfinite(pinned)):
            raise ValueError("fixed centroid must be a finite T-vector")

    surviving = list(range(len(names)))
    removed = []
    degenerate = False
    while True:
        cen = pinned if pinned is not None else centroid(P[surviving])
        dists = np.linalg.norm(P[surviving] - cen, axis=1) / np.sqrt(T)
        worst = int(np.argmax(dists))  # first max, i.e. lowest surviving index
        if dists[worst] <= tau:
            break
        if len(surviving) == 1:
            degenerate = True
            break
        removed.append((names[surviving[worst]], float(dists[worst])))
        surviving.pop(worst)

    return EnsembleReport(
        methods=names,
        predictions=P,
        centroid=cen,
        removed=tuple(removed),
        tau=float(tau),
        fused=P[surviving].mean(axis=0),
        degenerate=degenerate,
    )


def report_to_doc(report: EnsembleReport) -> dict:
    return {
        "methods": list(report.methods),
        "predictions": [list(map(float, row)) for row in report.predictions],
        "centroid": [float(x) for x in report.centroid],
        "removed": [[m, d] for m, d in report.removed],
        "tau": report.tau,
        "fused": [float(x) for x in report.fused],
        "degenerate": report.degenerate,
        "survivors": list(report.survivors),
    }


def write_report_json(report: EnsembleReport, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_doc(report), fh, indent=2)
        fh.write("\n")


def write_fused_csv(report: EnsembleReport, bundle_ids: Sequence[str], path: str) -> None:
    if len(bundle_ids) != report.fused.size:
        raise ValueError("one bundle id per fused value required")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bundle_id", "fused_accuracy_pct"])
        for bid, val in zip(bundle_ids, report.fused):
            w.writerow([bid, format(float(val), ".6f")])

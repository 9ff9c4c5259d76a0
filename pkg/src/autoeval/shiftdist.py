"""Shift signatures between clustered feature bundles.

Two bundles are clustered with the same seed, then compared through the
cluster structure: a Fréchet distance between Gaussians summarizing the
two center sets (the default signature), or the mean of per-cluster
Fréchet distances after Hungarian matching of centers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .bundles import FeatureBundle
from .kmeans import DEFAULT_SEED, ClusterModel, kmeans_fit

DEFAULT_EPS_SCALE = 1e-6
MODES = ("centers_gaussian", "matched_percluster")


@dataclass(frozen=True)
class GaussianStats:
    """Mean and regularized covariance summarizing a point set."""

    mean: np.ndarray
    covariance: np.ndarray
    count: int

    def __post_init__(self) -> None:
        mean = np.ascontiguousarray(np.asarray(self.mean, dtype=np.float64))
        cov = np.ascontiguousarray(np.asarray(self.covariance, dtype=np.float64))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape must match mean dimension")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("gaussian stats must be finite")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-10:
            raise ValueError("covariance must be symmetric")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def d(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class ShiftSignature:
    """Distance summary of one sample bundle against the reference."""

    global_fd: float
    matched_center_dist: float
    per_cluster_fd: np.ndarray
    mode: str

    def __post_init__(self) -> None:
        per = np.ascontiguousarray(np.asarray(self.per_cluster_fd, dtype=np.float64))
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not (np.isfinite(self.global_fd) and self.global_fd >= 0):
            raise ValueError("global_fd must be finite and >= 0")
        if not (np.isfinite(self.matched_center_dist) and self.matched_center_dist >= 0):
            raise ValueError("matched_center_dist must be finite and >= 0")
        if per.ndim != 1 or not np.all(np.isfinite(per)) or np.any(per < 0):
            raise ValueError("per_cluster_fd must be finite and >= 0")
        if np.any(np.diff(per) < 0):
            raise ValueError("per_cluster_fd must be sorted ascending")
        per.flags.writeable = False
        object.__setattr__(self, "per_cluster_fd", per)

    @property
    def k(self) -> int:
        return self.per_cluster_fd.size


def gaussian_fit(points: np.ndarray, eps_scale: float = DEFAULT_EPS_SCALE) -> GaussianStats:
    """Fit mean + unbiased covariance, ridge-regularized for rank deficiency."""
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("points must be a non-empty 2-D array")
    if not np.all(np.isfinite(X)):
        raise ValueError("points must be finite")
    m, d = X.shape
    mean = X.mean(axis=0)
    if m == 1:
        cov = np.zeros((d, d))
    else:
        centered = X - mean
        cov = centered.T @ centered / (m - 1)
        cov = (cov + cov.T) / 2.0
    ridge = eps_scale * float(np.trace(cov)) / d + 1e-12
    cov = cov + ridge * np.eye(d)
    return GaussianStats(mean=mean, covariance=cov, count=m)


def psd_sqrt(A: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition."""
    M = np.asarray(A, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix must be finite")
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-8:
        raise ValueError("matrix must be symmetric")
    w, V = np.linalg.eigh((M + M.T) / 2.0)
    if w.min(initial=0.0) < -1e-8:
        raise ValueError(f"matrix is not PSD (min eigenvalue {w.min():g})")
    w = np.clip(w, 0.0, None)
    S = (V * np.sqrt(w)) @ V.T
    return (S + S.T) / 2.0


def frechet_distance(g1: GaussianStats, g2: GaussianStats) -> float:
    """Fréchet distance between two Gaussians."""
    if g1.d != g2.d:
        raise ValueError(f"dimension mismatch: {g1.d} vs {g2.d}")
    if np.array_equal(g1.mean, g2.mean) and np.array_equal(g1.covariance, g2.covariance):
        return 0.0
    delta = g1.mean - g2.mean
    s1 = psd_sqrt(g1.covariance)
    inner = s1 @ g2.covariance @ s1
    covmean = psd_sqrt((inner + inner.T) / 2.0)
    d2 = float(delta @ delta) + float(
        np.trace(g1.covariance) + np.trace(g2.covariance) - 2.0 * np.trace(covmean)
    )
    if d2 < 0:
        if d2 < -1e-8:
            raise ValueError(f"negative squared distance {d2:g} beyond tolerance")
        d2 = 0.0
    return float(np.sqrt(d2))


def hungarian_match(cost: np.ndarray) -> np.ndarray:
    """Min-cost row-to-column assignment, lexicographically smallest on ties."""
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("cost matrix must be square")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    k = C.shape[0]
    rows, cols = linear_sum_assignment(C)
    total = float(C[rows, cols].sum())
    tol = 1e-9 * max(1.0, abs(total))
    # fix rows in order, taking the smallest column that still permits
    # an optimal completion of the remaining rows
    perm = np.full(k, -1, dtype=np.int64)
    used = np.zeros(k, dtype=bool)
    fixed = 0.0
    for i in range(k):
        tail = np.arange(i + 1, k)
        for cand in np.flatnonzero(~used):
            free = np.flatnonzero(~used & (np.arange(k) != cand))
            if tail.size:
                sub = C[np.ix_(tail, free)]
                sr, sc = linear_sum_assignment(sub)
                rest = float(sub[sr, sc].sum())
            else:
                rest = 0.0
            if fixed + C[i, cand] + rest <= total + tol:
                perm[i] = cand
                used[cand] = True
                fixed += float(C[i, cand])
                break
    return perm


def kcfca_signature(
    ref: FeatureBundle,
    sample: FeatureBundle,
    k: int,
    mode: str = "centers_gaussian",
    seed: int = DEFAULT_SEED,
    eps_scale: float = DEFAULT_EPS_SCALE,
    ref_model: Optional[ClusterModel] = None,
) -> ShiftSignature:
    """Cluster both bundles and measure the shift between them.

    Both bundles are clustered with the same seed so that signature noise
    reflects the data, not initialization.  Passing `ref_model` (a model fit
    on `ref` with the same k and seed) skips re-clustering the reference;
    output is identical for a fixed seed.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if ref.d != sample.d:
        raise ValueError(f"bundle dimension mismatch: {ref.d} vs {sample.d}")
    if ref.n < k or sample.n < k:
        raise ValueError("both bundles need at least k points")

    ref_X = ref.features64()
    if ref_model is None:
        ref_model = kmeans_fit(ref_X, k=k, seed=seed)
    elif ref_model.k != k or ref_model.d != ref.d:
        raise ValueError("ref_model does not match requested k and dimension")
    sam_model = kmeans_fit(sample.features64(), k=k, seed=seed)
    sam_X = sample.features64()

    ref_centers = np.asarray(ref_model.centers, dtype=np.float64)
    sam_centers = np.asarray(sam_model.centers, dtype=np.float64)

    center_cost = np.sqrt(
        np.maximum(
            (ref_centers**2).sum(axis=1)[:, None]
            + (sam_centers**2).sum(axis=1)[None, :]
            - 2.0 * ref_centers @ sam_centers.T,
            0.0,
        )
    )
    perm = hungarian_match(center_cost)
    matched_center_dist = float(center_cost[np.arange(k), perm].mean())

    per_fd = np.empty(k)
    for i in range(k):
        g_ref = gaussian_fit(ref_X[ref_model.assignments == i], eps_scale)
        g_sam = gaussian_fit(sam_X[sam_model.assignments == perm[i]], eps_scale)
        per_fd[i] = frechet_distance(g_ref, g_sam)
    per_fd.sort()

    if mode == "centers_gaussian":
        global_fd = frechet_distance(
            gaussian_fit(ref_centers, eps_scale), gaussian_fit(sam_centers, eps_scale)
        )
    else:
        global_fd = float(per_fd.mean())

    return ShiftSignature(
        global_fd=global_fd,
        matched_center_dist=matched_center_dist,
        per_cluster_fd=per_fd,
        mode=mode,
    )

"""Seeded Lloyd k-means with k-means++ initialization and silhouette scoring.

Distances are squared Euclidean for assignment and inertia. Assignment ties go
to the lowest center index. An emptied cluster is re-seeded to the data point
farthest from its current center. All randomness flows through one explicit
seed, so a fit is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_SEED = 17
DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-6

# rows per chunk when forming the n x k distance matrix
_CHUNK = 2048


@dataclass(frozen=True)
class ClusterModel:
    """Result of one k-means fit. Arrays are read-only after construction."""

    centers: np.ndarray
    assignments: np.ndarray
    inertia: float
    k: int
    seed: int
    iterations_run: int

    def __post_init__(self):
        self.centers.setflags(write=False)
        self.assignments.setflags(write=False)

    @property
    def d(self) -> int:
        return self.centers.shape[1]


def pairwise_sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Exact (non-expanded) squared Euclidean distances, n x k.

    The direct difference form keeps genuinely equidistant points bit-equal,
    which the tie rule depends on.
    """
    out = np.empty((points.shape[0], centers.shape[0]), dtype=np.float64)
    for start in range(0, points.shape[0], _CHUNK):
        stop = min(start + _CHUNK, points.shape[0])
        diff = points[start:stop, None, :] - centers[None, :, :]
        out[start:stop] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def kmeans_fit(
    features: np.ndarray,
    k: int,
    seed: int = DEFAULT_SEED,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    on_iteration: Callable[[int, float], None] | None = None,
) -> ClusterModel:
    """Cluster ``features`` into ``k`` clusters.

    Runs Lloyd iterations from a k-means++ seeding until the assignment is a
    fixed point, the maximum per-coordinate center shift drops below ``tol``,
    or ``max_iter`` is reached. ``on_iteration`` (if given) receives
    ``(iteration_index, inertia)`` at every assignment step; the inertia
    sequence it sees is non-increasing.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if tol < 0:
        raise ValueError("tol must be >= 0")

    rng = np.random.default_rng(seed)
    centers = _plus_plus_init(X, k, rng)
    assignments = None
    iterations = 0

    for it in range(max_iter):
        d2 = pairwise_sq_dists(X, centers)
        new_assign = np.argmin(d2, axis=1)
        if on_iteration is not None:
            on_iteration(it, float(d2[np.arange(n), new_assign].sum()))
        if assignments is not None and np.array_equal(new_assign, assignments):
            # exact fixed point: centers are already the means of new_assign
            assignments = new_assign
            break
        assignments = new_assign

        new_centers = _update_centers(X, assignments, centers, k)
        shift = float(np.max(np.abs(new_centers - centers)))
        centers = new_centers
        iterations = it + 1
        if shift < tol:
            break

    # sync assignments with the final centers on every exit path
    d2 = pairwise_sq_dists(X, centers)
    assignments = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), assignments].sum())
    return ClusterModel(
        centers=centers.copy(),
        assignments=assignments.astype(np.int64),
        inertia=inertia,
        k=k,
        seed=seed,
        iterations_run=iterations,
    )


def assign(model: ClusterModel, features: np.ndarray) -> np.ndarray:
    """Nearest-center index for each row, ties to the lowest index."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.d:
        raise ValueError(f"expected shape (m, {model.d}), got {X.shape}")
    return np.argmin(pairwise_sq_dists(X, model.centers), axis=1)


def silhouette_score(features: np.ndarray, assignments: np.ndarray) -> float:
    """Mean silhouette value over all points.

    Per point: (b - a) / max(a, b) with a the mean Euclidean distance to the
    rest of its own cluster and b the smallest mean distance to another
    cluster. Points in singleton clusters contribute 0, as does a point with
    a == b == 0.
    """
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(assignments)
    n = X.shape[0]
    if n < 2:
        raise ValueError("silhouette needs at least 2 points")
    uniq, counts = np.unique(labels, return_counts=True)
    if uniq.size < 2:
        raise ValueError("silhouette needs at least 2 non-empty clusters")

    dists = np.sqrt(np.maximum(pairwise_sq_dists(X, X), 0.0))
    scores = np.zeros(n)
    count_of = dict(zip(uniq.tolist(), counts.tolist()))
    # mean distance from every point to each cluster, n x n_clusters
    cluster_means = np.stack([dists[:, labels == c].mean(axis=1) for c in uniq], axis=1)
    for i in range(n):
        ci = np.searchsorted(uniq, labels[i])
        m = count_of[int(labels[i])]
        if m == 1:
            continue
        a = cluster_means[i, ci] * m / (m - 1)  # exclude the zero self-distance
        b = np.min(np.delete(cluster_means[i], ci))
        denom = max(a, b)
        if denom > 0:
            scores[i] = (b - a) / denom
    return float(scores.mean())


def _plus_plus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = X[first]
    closest = np.einsum("ij,ij->i", X - centers[0], X - centers[0])
    for j in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))  # all points coincide with a chosen center
        centers[j] = X[idx]
        diff = X - centers[j]
        closest = np.minimum(closest, np.einsum("ij,ij->i", diff, diff))
    return centers


def _update_centers(
    X: np.ndarray, assignments: np.ndarray, old_centers: np.ndarray, k: int
) -> np.ndarray:
    centers = np.empty_like(old_centers)
    for j in range(k):
        mask = assignments == j
        if mask.any():
            centers[j] = X[mask].mean(axis=0)
        else:
            diff = X - old_centers[j]
            far = int(np.argmax(np.einsum("ij,ij->i", diff, diff)))
            centers[j] = X[far]
    return centers

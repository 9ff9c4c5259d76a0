"""Base regressors and the stacked dynamic regression model.

Accuracy is regressed on shift-signature features.  Four base regressors
(ordinary least squares, k-nearest neighbors, a random forest, and RBF
kernel ridge standing in for support vector regression) are combined by
non-negative least squares over out-of-fold predictions, so the combined
predictor is a learned weighted sum of the bases.

All regressors are hand-rolled on numpy so that a model serialized to
JSON (floats as 17-significant-digit decimal strings) reloads to
bit-identical predictions.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import nnls

BASE_KINDS = ("ols", "knn", "random_forest", "kernel_ridge")
DEFAULT_FOLDS = 5
DEFAULT_KNN_K = 5
DEFAULT_TREES = 100
DEFAULT_MIN_LEAF = 2
DEFAULT_RIDGE_LAM = 1e-3


def _f2s(x) -> str:
    return format(float(x), ".17g")


def _vec2s(v) -> list:
    return [_f2s(x) for x in np.ravel(v)]


def _mat2s(M) -> list:
    return [_vec2s(row) for row in np.asarray(M)]


def _s2vec(strs) -> np.ndarray:
    return np.array([float(s) for s in strs], dtype=np.float64)


def _s2mat(rows, p) -> np.ndarray:
    if not rows:
        return np.zeros((0, p))
    return np.array([[float(s) for s in row] for row in rows], dtype=np.float64)


@dataclass(frozen=True)
class TrainingTable:
    """Rows of (signature features, accuracy fraction, sample id)."""

    X: np.ndarray
    y: np.ndarray
    ids: tuple

    def __post_init__(self) -> None:
        X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64))
        ids = tuple(str(i) for i in self.ids)
        if X.ndim != 2:
            raise ValueError("features must be 2-D")
        if y.shape != (X.shape[0],) or len(ids) != X.shape[0]:
            raise ValueError("row count mismatch between features, targets, ids")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if not np.all(np.isfinite(y)) or np.any(y < 0) or np.any(y > 1):
            raise ValueError("accuracy targets must lie in [0, 1]")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "ids", ids)

    @classmethod
    def from_rows(cls, rows: Sequence) -> "TrainingTable":
        feats = [np.atleast_1d(np.asarray(r[0], dtype=np.float64)) for r in rows]
        return cls(
            X=np.vstack(feats) if feats else np.zeros((0, 1)),
            y=np.array([r[1] for r in rows], dtype=np.float64),
            ids=tuple(r[2] for r in rows),
        )

    def subset(self, indices) -> "TrainingTable":
        idx = np.asarray(indices)
        return TrainingTable(
            X=self.X[idx], y=self.y[idx], ids=tuple(self.ids[i] for i in idx)
        )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class TrainedRegressor:
    kind: str
    feature_dim: int
    params: dict


@dataclass(frozen=True)
class DrmModel:
    bases: tuple
    meta_weights: np.ndarray
    folds: int

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(np.asarray(self.meta_weights, dtype=np.float64))
        if w.ndim != 1 or w.size != len(self.bases):
            raise ValueError("one weight per base regressor required")
        if np.any(w < 0) or not np.any(w > 0):
            raise ValueError("meta weights must be >= 0 with at least one positive")
        w.flags.writeable = False
        object.__setattr__(self, "meta_weights", w)
        object.__setattr__(self, "bases", tuple(self.bases))

    @property
    def feature_dim(self) -> int:
        return self.bases[0].feature_dim


# --- base regressors ---


def _check_table_fit(table: TrainingTable) -> None:
    if table.n < 2:
        raise ValueError("need at least 2 rows to fit")


def _fit_ols(table: TrainingTable) -> dict:
    A = np.hstack([table.X, np.ones((table.n, 1))])
    coef, *_ = np.linalg.lstsq(A, table.y, rcond=None)
    return {"weights": coef[:-1].copy(), "intercept": float(coef[-1])}


def _fit_knn(table: TrainingTable, k_neighbors: int) -> dict:
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    return {"X": table.X.copy(), "y": table.y.copy(), "k_neighbors": int(k_neighbors)}


def _median_pairwise_distance(X: np.ndarray) -> float:
    n = X.shape[0]
    if n < 2:
        return 1.0
    d2 = (
        (X**2).sum(axis=1)[:, None]
        + (X**2).sum(axis=1)[None, :]
        - 2.0 * X @ X.T
    )
    iu = np.triu_indices(n, k=1)
    med = float(np.median(np.sqrt(np.maximum(d2[iu], 0.0))))
    return med if med > 0 else 1.0


def _fit_kernel_ridge(table: TrainingTable, lam: float, bandwidth: Optional[float]) -> dict:
    h = float(bandwidth) if bandwidth is not None else _median_pairwise_distance(table.X)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    K = _rbf_kernel(table.X, table.X, h)
    y_mean = float(table.y.mean())
    alpha = np.linalg.solve(K + lam * np.eye(table.n), table.y - y_mean)
    return {"X": table.X.copy(), "alpha": alpha, "bandwidth": h, "lam": float(lam), "y_mean": y_mean}


def _rbf_kernel(A: np.ndarray, B: np.ndarray, h: float) -> np.ndarray:
    d2 = (
        (A**2).sum(axis=1)[:, None]
        + (B**2).sum(axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    return np.exp(-np.maximum(d2, 0.0) / (2.0 * h * h))


def _best_split(X: np.ndarray, y: np.ndarray, idx: np.ndarray, min_leaf: int):
    """Lowest-SSE axis-aligned split of idx, or None if no legal split exists."""
    m = idx.size
    if m < 2 * min_leaf or np.ptp(y[idx]) == 0.0:
        return None
    best = None
    for j in range(X.shape[1]):
        xs = X[idx, j]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        ys = y[idx][order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        counts = np.arange(1, m, dtype=np.float64)
        left_sse = csq[:-1] - csum[:-1] ** 2 / counts
        right_cnt = m - counts
        right_sum = csum[-1] - csum[:-1]
        right_sse = (csq[-1] - csq[:-1]) - right_sum**2 / right_cnt
        sse = left_sse + right_sse
        valid = (
            (counts >= min_leaf)
            & (right_cnt >= min_leaf)
            & (xs_sorted[1:] > xs_sorted[:-1])
        )
        if not valid.any():
            continue
        sse = np.where(valid, sse, np.inf)
        i = int(np.argmin(sse))
        if best is None or sse[i] < best[0]:
            thr = (xs_sorted[i] + xs_sorted[i + 1]) / 2.0
            best = (float(sse[i]), j, thr)
    if best is None:
        return None
    return best[1], best[2]


def _grow_tree(X: np.ndarray, y: np.ndarray, idx0: np.ndarray, min_leaf: int) -> dict:
    feature, threshold, left, right, value = [], [], [], [], []
    stack = [(idx0, -1, False)]
    while stack:
        idx, parent, is_right = stack.pop()
        nid = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        if parent >= 0:
            if is_right:
                right[parent] = nid
            else:
                left[parent] = nid
        split = _best_split(X, y, idx, min_leaf)
        if split is None:
            continue
        j, thr = split
        mask = X[idx, j] <= thr
        feature[nid] = j
        threshold[nid] = thr
        stack.append((idx[~mask], nid, True))
        stack.append((idx[mask], nid, False))
    return {
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold, dtype=np.float64),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "value": np.array(value, dtype=np.float64),
    }


def _fit_forest(table: TrainingTable, n_trees: int, min_leaf: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        boot = rng.integers(0, table.n, table.n)
        trees.append(_grow_tree(table.X, table.y, boot, min_leaf))
    return {"trees": trees, "n_trees": int(n_trees), "min_leaf": int(min_leaf)}


_HYPER_KEYS = {
    "ols": set(),
    "knn": {"k_neighbors"},
    "random_forest": {"n_trees", "min_leaf"},
    "kernel_ridge": {"lam", "bandwidth"},
}


def fit_base(
    kind: str, table: TrainingTable, hyper: Optional[dict] = None, seed: int = 0
) -> TrainedRegressor:
    """Fit one base regressor on the table."""
    if kind not in BASE_KINDS:
        raise ValueError(f"unknown regressor kind {kind!r}")
    _check_table_fit(table)
    hyper = dict(hyper or {})
    extra = set(hyper) - _HYPER_KEYS[kind]
    if extra:
        raise ValueError(f"unknown hyperparameters for {kind}: {sorted(extra)}")
    if kind == "ols":
        params = _fit_ols(table)
    elif kind == "knn":
        params = _fit_knn(table, hyper.get("k_neighbors", DEFAULT_KNN_K))
    elif kind == "random_forest":
        params = _fit_forest(
            table,
            hyper.get("n_trees", DEFAULT_TREES),
            hyper.get("min_leaf", DEFAULT_MIN_LEAF),
            seed,
        )
    else:
        params = _fit_kernel_ridge(
            table, hyper.get("lam", DEFAULT_RIDGE_LAM), hyper.get("bandwidth")
        )
    return TrainedRegressor(kind=kind, feature_dim=table.p, params=params)


def _tree_predict(tree: dict, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        nid = 0
        while tree["feature"][nid] >= 0:
            if X[r, tree["feature"][nid]] <= tree["threshold"][nid]:
                nid = tree["left"][nid]
            else:
                nid = tree["right"][nid]
        out[r] = tree["value"][nid]
    return out


def _predict_raw(reg: TrainedRegressor, X: np.ndarray) -> np.ndarray:
    if reg.kind == "ols":
        return X @ reg.params["weights"] + reg.params["intercept"]
    if reg.kind == "knn":
        tr_X, tr_y = reg.params["X"], reg.params["y"]
        k = min(reg.params["k_neighbors"], tr_X.shape[0])
        d2 = (
            (X**2).sum(axis=1)[:, None]
            + (tr_X**2).sum(axis=1)[None, :]
            - 2.0 * X @ tr_X.T
        )
        out = np.empty(X.shape[0])
        ranks = np.arange(tr_X.shape[0])
        for r in range(X.shape[0]):
            # stable order: distance, then lowest training-row index on ties
            order = np.lexsort((ranks, d2[r]))
            out[r] = tr_y[order[:k]].mean()
        return out
    if reg.kind == "random_forest":
        preds = np.zeros(X.shape[0])
        for tree in reg.params["trees"]:
            preds += _tree_predict(tree, X)
        return preds / len(reg.params["trees"])
    if reg.kind == "kernel_ridge":
        K = _rbf_kernel(X, reg.params["X"], reg.params["bandwidth"])
        return K @ reg.params["alpha"] + reg.params["y_mean"]
    raise ValueError(f"unknown regressor kind {reg.kind!r}")


def predict_many(reg: TrainedRegressor, X) -> np.ndarray:
    """Predictions for each row of X, clamped to [0, 1]."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != reg.feature_dim:
        raise ValueError(f"expected n x {reg.feature_dim} input, got {X.shape}")
    return np.clip(_predict_raw(reg, X), 0.0, 1.0)


def predict(reg: TrainedRegressor, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return float(predict_many(reg, x[None, :])[0])


# --- stacking ---


def _child_seed(seed: int, fold: int, base_index: int) -> int:
    return int(np.random.SeedSequence([seed, fold, base_index]).generate_state(1)[0])


def oof_matrix(
    table: TrainingTable,
    base_kinds: Sequence[str] = BASE_KINDS,
    folds: int = DEFAULT_FOLDS,
    seed: int = 0,
    hyper: Optional[dict] = None,
) -> np.ndarray:
    """Out-of-fold prediction matrix, one column per base kind."""
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if table.n < 2 * folds:
        raise ValueError("need at least 2 rows per fold")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(table.n)
    P = np.empty((table.n, len(base_kinds)))
    for f, test_idx in enumerate(np.array_split(perm, folds)):
        train_idx = np.setdiff1d(perm, test_idx)
        sub = table.subset(train_idx)
        for b, kind in enumerate(base_kinds):
            reg = fit_base(kind, sub, (hyper or {}).get(kind), _child_seed(seed, f, b))
            P[test_idx, b] = predict_many(reg, table.X[test_idx])
    return P


def solve_meta_weights(P: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Non-negative least squares weights; equal weights if all end up zero."""
    w, _ = nnls(P, y, atol=1e-10)
    if not np.any(w > 0):
        w = np.full(P.shape[1], 1.0 / P.shape[1])
    return w


def drm_fit(
    table: TrainingTable,
    base_kinds: Sequence[str] = BASE_KINDS,
    folds: int = DEFAULT_FOLDS,
    seed: int = 0,
    vote: bool = False,
    hyper: Optional[dict] = None,
) -> DrmModel:
    """Fit the stacked model: learn meta weights out-of-fold, refit bases in full."""
    base_kinds = tuple(base_kinds)
    if not base_kinds:
        raise ValueError("need at least one base kind")
    if vote:
        if folds < 2:
            raise ValueError("need at least 2 folds")
        if table.n < 2 * folds:
            raise ValueError("need at least 2 rows per fold")
        w = np.full(len(base_kinds), 1.0 / len(base_kinds))
    else:
        P = oof_matrix(table, base_kinds, folds, seed, hyper)
        w = solve_meta_weights(P, table.y)
    bases = tuple(
        fit_base(kind, table, (hyper or {}).get(kind), _child_seed(seed, folds, b))
        for b, kind in enumerate(base_kinds)
    )
    return DrmModel(bases=bases, meta_weights=w, folds=folds)


def drm_predict_many(model: DrmModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.feature_dim:
        raise ValueError(f"expected n x {model.feature_dim} input, got {X.shape}")
    out = np.zeros(X.shape[0])
    for w, base in zip(model.meta_weights, model.bases):
        if w != 0.0:
            out += w * predict_many(base, X)
    return np.clip(out, 0.0, 1.0)


def drm_predict(model: DrmModel, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return float(drm_predict_many(model, x[None, :])[0])


# --- persistence ---


def _regressor_doc(reg: TrainedRegressor) -> dict:
    p = reg.params
    if reg.kind == "ols":
        body = {"weights": _vec2s(p["weights"]), "intercept": _f2s(p["intercept"])}
    elif reg.kind == "knn":
        body = {"X": _mat2s(p["X"]), "y": _vec2s(p["y"]), "k_neighbors": p["k_neighbors"]}
    elif reg.kind == "random_forest":
        body = {
            "n_trees": p["n_trees"],
            "min_leaf": p["min_leaf"],
            "trees": [
                {
                    "feature": t["feature"].tolist(),
                    "threshold": _vec2s(t["threshold"]),
                    "left": t["left"].tolist(),
                    "right": t["right"].tolist(),
                    "value": _vec2s(t["value"]),
                }
                for t in p["trees"]
            ],
        }
    else:
        body = {
            "X": _mat2s(p["X"]),
            "alpha": _vec2s(p["alpha"]),
            "bandwidth": _f2s(p["bandwidth"]),
            "lam": _f2s(p["lam"]),
            "y_mean": _f2s(p["y_mean"]),
        }
    return {"model": "regressor", "kind": reg.kind, "feature_dim": reg.feature_dim, "params": body}


def _regressor_from_doc(doc: dict) -> TrainedRegressor:
    kind = doc["kind"]
    p = doc["params"]
    dim = int(doc["feature_dim"])
    if kind == "ols":
        params = {"weights": _s2vec(p["weights"]), "intercept": float(p["intercept"])}
    elif kind == "knn":
        params = {"X": _s2mat(p["X"], dim), "y": _s2vec(p["y"]), "k_neighbors": int(p["k_neighbors"])}
    elif kind == "random_forest":
        params = {
            "n_trees": int(p["n_trees"]),
            "min_leaf": int(p["min_leaf"]),
            "trees": [
                {
                    "feature": np.asarray(t["feature"], dtype=np.int64),
                    "threshold": _s2vec(t["threshold"]),
                    "left": np.asarray(t["left"], dtype=np.int64),
                    "right": np.asarray(t["right"], dtype=np.int64),
                    "value": _s2vec(t["value"]),
                }
                for t in p["trees"]
            ],
        }
    elif kind == "kernel_ridge":
        params = {
            "X": _s2mat(p["X"], dim),
            "alpha": _s2vec(p["alpha"]),
            "bandwidth": float(p["bandwidth"]),
            "lam": float(p["lam"]),
            "y_mean": float(p["y_mean"]),
        }
    else:
        raise ValueError(f"unknown regressor kind {kind!r}")
    return TrainedRegressor(kind=kind, feature_dim=dim, params=params)


def model_to_doc(model) -> dict:
    if isinstance(model, TrainedRegressor):
        return _regressor_doc(model)
    if isinstance(model, DrmModel):
        return {
            "model": "drm",
            "folds": model.folds,
            "meta_weights": _vec2s(model.meta_weights),
            "bases": [_regressor_doc(b) for b in model.bases],
        }
    raise TypeError(f"not a saveable model: {type(model).__name__}")


def model_from_doc(doc: dict):
    tag = doc.get("model")
    if tag == "regressor":
        return _regressor_from_doc(doc)
    if tag == "drm":
        return DrmModel(
            bases=tuple(_regressor_from_doc(b) for b in doc["bases"]),
            meta_weights=_s2vec(doc["meta_weights"]),
            folds=int(doc["folds"]),
        )
    raise ValueError(f"unknown model tag {tag!r}")


def save_model(model, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_doc(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_doc(json.load(fh))

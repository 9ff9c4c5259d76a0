"""End-to-end orchestration: tables, training, prediction, fusion, reports.

Accuracies cross every internal boundary as fractions in [0, 1]; only
rendered artifacts (predictions.csv, summary.csv, the fusion report)
carry percentage points.  All CSV outputs start with a versioned comment
line so downstream diffs stay stable.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bundles import FeatureBundle, read_bundle, write_bundle
from .errors import ConfigError
from .kmeans import kmeans_fit, silhouette_score
from .omfd import EnsembleReport, omfd_fuse, write_fused_csv, write_report_json
from .regress import (
    BASE_KINDS,
    DrmModel,
    TrainingTable,
    drm_fit,
    drm_predict_many,
    fit_base,
    load_model,
    predict_many,
    save_model,
)
from .scores import AtcThreshold, atc_fit, atc_predict, conf_score, entropy_score, fid_score
from .shiftdist import kcfca_signature
from .synthgen import ShiftSpec, gen_shifted_bundle, gen_world, oracle_accuracy

PIPELINE_METHODS = ("kcfca", "conf_score", "entropy", "atc", "fid")
REGRESSOR_CHOICES = BASE_KINDS + ("drm",)
TABLE_CSV_VERSION = "# autoeval table v1"
PRED_CSV_VERSION = "# autoeval predictions v1"
SUMMARY_CSV_VERSION = "# autoeval summary v1"
SILHOUETTE_CAP = 2000


@dataclass(frozen=True)
class RunConfig:
    reference_bundle: Optional[str] = None
    training_bundles: tuple = ()
    eval_bundles: tuple = ()
    methods: tuple = PIPELINE_METHODS
    regressor: str = "ols"
    k_clusters: Optional[int] = None
    signature_mode: str = "centers_gaussian"
    signature_features: str = "global"
    seed: int = 17
    tau: float = 10.0
    folds: int = 5
    omfd_selection: str = "validation"
    fixed_centroid: Optional[tuple] = None
    output_dir: str = "autoeval_out"
    jobs: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "training_bundles", tuple(self.training_bundles))
        object.__setattr__(self, "eval_bundles", tuple(self.eval_bundles))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.fixed_centroid is not None:
            object.__setattr__(self, "fixed_centroid", tuple(float(x) for x in self.fixed_centroid))
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        for m in self.methods:
            if m not in PIPELINE_METHODS:
                raise ConfigError(f"unknown method {m!r}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must be unique")
        if self.regressor not in REGRESSOR_CHOICES:
            raise ConfigError(f"unknown regressor {self.regressor!r}")
        if self.k_clusters is not None and self.k_clusters < 1:
            raise ConfigError("k_clusters must be >= 1")
        if self.signature_mode not in ("centers_gaussian", "matched_percluster"):
            raise ConfigError(f"unknown signature mode {self.signature_mode!r}")
        if self.signature_features not in ("global", "full"):
            raise ConfigError(f"unknown signature feature set {self.signature_features!r}")
        if self.omfd_selection not in ("validation", "eval"):
            raise ConfigError(f"unknown omfd selection {self.omfd_selection!r}")
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


_CONFIG_KEYS = {
    "reference_bundle",
    "training_bundles",
    "eval_bundles",
    "methods",
    "regressor",
    "k_clusters",
    "signature_mode",
    "signature_features",
    "seed",
    "tau",
    "folds",
    "omfd_selection",
    "fixed_centroid",
    "output_dir",
    "jobs",
}


def build_config(doc: Optional[dict] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Merge config-file values and flag overrides; env seed wins last."""
    merged = {}
    for src in (doc or {}), (overrides or {}):
        for key, val in src.items():
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            if val is not None:
                merged[key] = val
    env_seed = os.environ.get("AUTOEVAL_SEED")
    if env_seed is not None:
        try:
            merged["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"AUTOEVAL_SEED must be an integer, got {env_seed!r}")
    return RunConfig(**merged)


def load_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    return doc


@dataclass(frozen=True)
class EvalResult:
    """Per-bundle predictions plus aggregate RMSE where truths exist."""

    rows: tuple  # (bundle_id, method, pred_fraction, truth_fraction or None)
    rmse_pct: dict = field(default_factory=dict)


def evaluate_rmse(pred, truth) -> float:
    """Root-mean-square difference, same units as the inputs."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError("pred and truth must be equal-length vectors")
    if p.size == 0:
        raise ValueError("need at least one entry")
    return float(np.sqrt(np.mean((p - t) ** 2)))


# --- bundle loading ---


def _load_sorted(paths: Sequence[str]) -> list:
    bundles = [read_bundle(p) for p in paths]
    bundles.sort(key=lambda b: b.id)
    ids = [b.id for b in bundles]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate bundle ids in input set")
    return bundles


def _require_accuracy(bundle: FeatureBundle) -> float:
    if bundle.accuracy is not None:
        return bundle.accuracy
    if bundle.logits is not None and bundle.labels is not None:
        return oracle_accuracy(bundle)
    raise ConfigError(f"bundle {bundle.id!r} has no accuracy and no way to derive it")


def _check_dims(ref: FeatureBundle, others: Sequence[FeatureBundle]) -> None:
    for b in others:
        if b.d != ref.d:
            raise ConfigError(
                f"bundle {b.id!r} dimension {b.d} does not match reference {ref.d}"
            )


def _resolve_k(cfg: RunConfig, ref: FeatureBundle) -> int:
    if cfg.k_clusters is not None:
        return cfg.k_clusters
    if ref.n_classes is not None:
        return ref.n_classes
    raise ConfigError("k_clusters not set and reference bundle has no class count")


# --- feature extraction ---


def _sig_vector(sig, which: str) -> np.ndarray:
    if which == "global":
        return np.array([sig.global_fd])
    return np.concatenate(([sig.global_fd, sig.matched_center_dist], sig.per_cluster_fd))


def _kcfca_job(args):
    ref, bundle, k, mode, seed, ref_model, which = args
    sig = kcfca_signature(ref, bundle, k=k, mode=mode, seed=seed, ref_model=ref_model)
    return _sig_vector(sig, which)


def _map_jobs(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def method_features(
    method: str,
    ref: FeatureBundle,
    bundles: Sequence[FeatureBundle],
    cfg: RunConfig,
    ref_model=None,
    atc_threshold: Optional[AtcThreshold] = None,
) -> np.ndarray:
    """Feature rows for one method over a list of bundles, in bundle order."""
    if method == "kcfca":
        k = _resolve_k(cfg, ref)
        if ref_model is None:
            ref_model = kmeans_fit(ref.features64(), k=k, seed=cfg.seed)
        args = [
            (ref, b, k, cfg.signature_mode, cfg.seed, ref_model, cfg.signature_features)
            for b in bundles
        ]
        rows = _map_jobs(_kcfca_job, args, cfg.jobs)
        return np.vstack(rows)
    if method == "conf_score":
        return np.array([[conf_score(b)] for b in bundles])
    if method == "entropy":
        return np.array([[entropy_score(b)] for b in bundles])
    if method == "atc":
        th = atc_threshold if atc_threshold is not None else atc_fit(ref)
        return np.array([[atc_predict(th, b)] for b in bundles])
    if method == "fid":
        return np.array([[fid_score(ref, b)] for b in bundles])
    raise ConfigError(f"unknown method {method!r}")


def build_training_tables(cfg: RunConfig) -> dict:
    """One TrainingTable per configured method, rows sorted by bundle id."""
    if not cfg.training_bundles:
        raise ConfigError("no training bundles")
    if cfg.reference_bundle is None:
        raise ConfigError("reference bundle required")
    ref = read_bundle(cfg.reference_bundle)
    train = _load_sorted(cfg.training_bundles)
    _check_dims(ref, train)
    accs = np.array([_require_accuracy(b) for b in train])
    ids = tuple(b.id for b in train)

    ref_model = None
    if "kcfca" in cfg.methods:
        ref_model = kmeans_fit(ref.features64(), k=_resolve_k(cfg, ref), seed=cfg.seed)
    th = atc_fit(ref) if "atc" in cfg.methods else None

    tables = {}
    for method in cfg.methods:
        X = method_features(method, ref, train, cfg, ref_model=ref_model, atc_threshold=th)
        tables[method] = TrainingTable(X=X, y=accs, ids=ids)
    return tables


# --- CSV artifacts ---


def write_table_csv(table: TrainingTable, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(TABLE_CSV_VERSION + "\n")
        w = csv.writer(fh)
        w.writerow(["bundle_id", "accuracy"] + [f"feat_{j}" for j in range(table.p)])
        for i in range(table.n):
            w.writerow(
                [table.ids[i], format(table.y[i], ".10f")]
                + [format(v, ".10g") for v in table.X[i]]
            )


def read_table_csv(path: str) -> TrainingTable:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != TABLE_CSV_VERSION:
            raise ConfigError(f"unrecognized table version line {first!r}")
        reader = csv.reader(fh)
        header = next(reader)
        p = len(header) - 2
        ids, ys, X = [], [], []
        for row in reader:
            ids.append(row[0])
            ys.append(float(row[1]))
            X.append([float(v) for v in row[2 : 2 + p]])
    return TrainingTable(X=np.array(X).reshape(len(ids), p), y=np.array(ys), ids=tuple(ids))


def _fit_regressor(cfg: RunConfig, table: TrainingTable):
    if cfg.regressor == "drm":
        return drm_fit(table, folds=cfg.folds, seed=cfg.seed)
    return fit_base(cfg.regressor, table, seed=cfg.seed)


def _model_predict(model, X) -> np.ndarray:
    if isinstance(model, DrmModel):
        return drm_predict_many(model, X)
    return predict_many(model, X)


def _silhouette_diag(ref: FeatureBundle, k: int, seed: int):
    X = ref.features64()
    if X.shape[0] > SILHOUETTE_CAP:
        idx = np.sort(
            np.random.default_rng(seed).choice(X.shape[0], SILHOUETTE_CAP, replace=False)
        )
        X = X[idx]
    model = kmeans_fit(X, k=k, seed=seed)
    try:
        return float(silhouette_score(X, model.assignments))
    except ValueError:
        return None


def run_train(cfg: RunConfig) -> dict:
    """Build tables, fit one regressor per method, persist everything."""
    tables = build_training_tables(cfg)
    ref = read_bundle(cfg.reference_bundle)
    os.makedirs(cfg.output_dir, exist_ok=True)
    model_files = {}
    for method, table in tables.items():
        write_table_csv(table, os.path.join(cfg.output_dir, f"training_table_{method}.csv"))
        model = _fit_regressor(cfg, table)
        mpath = os.path.join(cfg.output_dir, "models", f"{method}.json")
        save_model(model, mpath)
        model_files[method] = mpath
    k = _resolve_k(cfg, ref) if "kcfca" in cfg.methods else None
    report = {
        "seed": cfg.seed,
        "methods": list(cfg.methods),
        "regressor": cfg.regressor,
        "folds": cfg.folds if cfg.regressor == "drm" else None,
        "k_clusters": k,
        "signature_mode": cfg.signature_mode,
        "signature_features": cfg.signature_features,
        "reference_bundle_id": ref.id,
        "n_training_bundles": len(cfg.training_bundles),
        "silhouette_reference": _silhouette_diag(ref, k, cfg.seed) if k else None,
        "model_files": {m: os.path.basename(p) for m, p in model_files.items()},
    }
    with open(os.path.join(cfg.output_dir, "train_report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def _load_models(cfg: RunConfig) -> dict:
    models = {}
    for method in cfg.methods:
        path = os.path.join(cfg.output_dir, "models", f"{method}.json")
        if not os.path.exists(path):
            raise ConfigError(f"model for {method!r} not found at {path}; run train first")
        models[method] = load_model(path)
    return models


def _prediction_matrix(
    cfg: RunConfig,
    models: dict,
    ref: FeatureBundle,
    bundles: Sequence[FeatureBundle],
    ref_model=None,
    atc_threshold=None,
) -> np.ndarray:
    """m x T matrix of accuracy fractions, methods in cfg order."""
    rows = []
    for method in cfg.methods:
        X = method_features(
            method, ref, bundles, cfg, ref_model=ref_model, atc_threshold=atc_threshold
        )
        rows.append(_model_predict(models[method], X))
    return np.vstack(rows)


def run_predict(cfg: RunConfig):
    """Predict each eval bundle per method, fuse, and write reports."""
    if not cfg.eval_bundles:
        raise ConfigError("no eval bundles")
    if cfg.reference_bundle is None:
        raise ConfigError("reference bundle required")
    models = _load_models(cfg)
    ref = read_bundle(cfg.reference_bundle)
    evals = _load_sorted(cfg.eval_bundles)
    _check_dims(ref, evals)
    eval_ids = [b.id for b in evals]
    truths = [b.accuracy for b in evals]

    ref_model = None
    if "kcfca" in cfg.methods:
        ref_model = kmeans_fit(ref.features64(), k=_resolve_k(cfg, ref), seed=cfg.seed)
    th = atc_fit(ref) if "atc" in cfg.methods else None

    P_eval = _prediction_matrix(cfg, models, ref, evals, ref_model, th)

    fusion_report = None
    fused = None
    sel_ids = eval_ids
    if len(cfg.methods) >= 2:
        if cfg.omfd_selection == "validation":
            if not cfg.training_bundles:
                raise ConfigError("validation-based fusion needs training bundles")
            train = _load_sorted(cfg.training_bundles)
            _check_dims(ref, train)
            P_sel = _prediction_matrix(cfg, models, ref, train, ref_model, th)
            sel_ids = [b.id for b in train]
        else:
            P_sel = P_eval
        fusion_report = omfd_fuse(
            P_sel * 100.0,
            cfg.methods,
            tau=cfg.tau,
            fixed_centroid=cfg.fixed_centroid,
        )
        keep = [i for i, m in enumerate(cfg.methods) if m in fusion_report.survivors]
        fused = P_eval[keep].mean(axis=0)
    elif len(cfg.methods) == 1:
        fused = P_eval[0]

    rows = []
    for mi, method in enumerate(cfg.methods):
        for bi, bid in enumerate(eval_ids):
            rows.append((bid, method, float(P_eval[mi, bi]), truths[bi]))
    for bi, bid in enumerate(eval_ids):
        rows.append((bid, "fused", float(fused[bi]), truths[bi]))

    rmse = {}
    if all(t is not None for t in truths):
        truth_pct = np.array(truths) * 100.0
        for mi, method in enumerate(cfg.methods):
            rmse[method] = evaluate_rmse(P_eval[mi] * 100.0, truth_pct)
        rmse["fused"] = evaluate_rmse(fused * 100.0, truth_pct)

    result = EvalResult(rows=tuple(rows), rmse_pct=rmse)

    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_predictions_csv(result, os.path.join(cfg.output_dir, "predictions.csv"))
    if rmse:
        _write_summary_csv(rmse, os.path.join(cfg.output_dir, "summary.csv"))
    if fusion_report is not None:
        from .omfd import report_to_doc

        doc = report_to_doc(fusion_report)
        doc["selection_set"] = cfg.omfd_selection
        doc["selection_ids"] = sel_ids
        doc_path = os.path.join(cfg.output_dir, "ensemble_report.json")
        with open(doc_path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    return result, fusion_report


def _write_predictions_csv(result: EvalResult, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(PRED_CSV_VERSION + "\n")
        w = csv.writer(fh)
        w.writerow(["bundle_id", "method", "pred_pct", "truth_pct"])
        for bid, method, pred, truth in result.rows:
            w.writerow(
                [
                    bid,
                    method,
                    format(pred * 100.0, ".6f"),
                    "" if truth is None else format(truth * 100.0, ".6f"),
                ]
            )


def _write_summary_csv(rmse: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(SUMMARY_CSV_VERSION + "\n")
        w = csv.writer(fh)
        w.writerow(["method", "rmse_pct"])
        for method, val in rmse.items():
            w.writerow([method, format(val, ".6f")])


def read_predictions_csv(path: str):
    """Returns (bundle_ids, methods incl. any 'fused', pct matrix, truths or None)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != PRED_CSV_VERSION:
            raise ConfigError(f"unrecognized predictions version line {first!r}")
        reader = csv.reader(fh)
        next(reader)
        per_method = {}
        truth_by_bundle = {}
        order = []
        for bid, method, pred, truth in reader:
            per_method.setdefault(method, {})[bid] = float(pred)
            if truth != "":
                truth_by_bundle[bid] = float(truth)
            if bid not in order:
                order.append(bid)
    methods = list(per_method)
    P = np.array([[per_method[m][bid] for bid in order] for m in methods])
    truths = (
        np.array([truth_by_bundle[bid] for bid in order])
        if len(truth_by_bundle) == len(order)
        else None
    )
    return order, methods, P, truths


def run_fuse(cfg: RunConfig) -> EnsembleReport:
    """Re-run fusion over an existing predictions.csv."""
    path = os.path.join(cfg.output_dir, "predictions.csv")
    ids, methods, P, _ = read_predictions_csv(path)
    keep = [i for i, m in enumerate(methods) if m != "fused"]
    report = omfd_fuse(
        P[keep], [methods[i] for i in keep], tau=cfg.tau, fixed_centroid=cfg.fixed_centroid
    )
    write_report_json(report, os.path.join(cfg.output_dir, "ensemble_report.json"))
    write_fused_csv(report, ids, os.path.join(cfg.output_dir, "fused.csv"))
    return report


def evaluate_tracks(csv_paths: Sequence[str]):
    """Per-track RMSE per method plus pooled-residual RMSE across tracks."""
    if not csv_paths:
        raise ConfigError("need at least one predictions file")
    rows = []
    residuals = {}
    for path in csv_paths:
        ids, methods, P, truths = read_predictions_csv(path)
        if truths is None:
            raise ConfigError(f"{path} lacks truth values; cannot evaluate")
        name = os.path.basename(path)
        for mi, m in enumerate(methods):
            rows.append((name, m, evaluate_rmse(P[mi], truths)))
            residuals.setdefault(m, []).extend(P[mi] - truths)
    for m, res in residuals.items():
        rows.append(("pooled", m, float(np.sqrt(np.mean(np.square(res))))))
    return rows


# --- synthetic grid generation ---


def _tilted_prior(C: int, temp: float) -> np.ndarray:
    w = np.exp(-temp * np.arange(C) / max(C - 1, 1))
    return w / w.sum()


def load_grid_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return _fill_grid(doc)


def _fill_grid(doc: dict) -> dict:
    required = {"C", "d", "separation", "world_seed", "n", "base_seed"}
    missing = required - set(doc)
    if missing:
        raise ConfigError(f"grid file missing keys: {sorted(missing)}")
    doc = dict(doc)
    doc.setdefault("cov_scale", 1.0)
    doc.setdefault("sigmas", [0.0])
    doc.setdefault("shift_norms", [0.0])
    doc.setdefault("prior_temps", [0.0])
    doc.setdefault("reference_n", doc["n"])
    return doc


def run_gen(grid: dict, out_dir: str) -> list:
    """Emit one bundle directory per grid point, plus the reference bundle.

    Grid points enumerate the cartesian product of sigmas x shift_norms x
    prior_temps in that nesting order, ids g0000, g0001, ...
    """
    grid = _fill_grid(grid)
    world = gen_world(
        C=int(grid["C"]),
        d=int(grid["d"]),
        separation=float(grid["separation"]),
        seed=int(grid["world_seed"]),
        cov_scale=float(grid["cov_scale"]),
    )
    os.makedirs(out_dir, exist_ok=True)
    base_seed = int(grid["base_seed"])
    n = int(grid["n"])

    ref_spec = ShiftSpec(
        noise_sigma=0.0,
        mean_shift=np.zeros(world.d),
        class_prior=np.full(world.C, 1.0 / world.C),
        n=int(grid["reference_n"]),
        seed=base_seed - 1 if base_seed > 0 else 999_983,
    )
    ref = gen_shifted_bundle(world, ref_spec, bundle_id="reference")
    write_bundle(ref, os.path.join(out_dir, "reference"))

    written = [os.path.join(out_dir, "reference")]
    idx = 0
    for sigma in grid["sigmas"]:
        for norm in grid["shift_norms"]:
            for temp in grid["prior_temps"]:
                seed = base_seed + idx
                rng = np.random.default_rng(seed)
                direction = rng.standard_normal(world.d)
                direction /= np.linalg.norm(direction)
                spec = ShiftSpec(
                    noise_sigma=float(sigma),
                    mean_shift=float(norm) * direction,
                    class_prior=_tilted_prior(world.C, float(temp)),
                    n=n,
                    seed=seed,
                )
                bid = f"g{idx:04d}"
                bundle = gen_shifted_bundle(world, spec, bundle_id=bid)
                path = os.path.join(out_dir, bid)
                write_bundle(bundle, path)
                written.append(path)
                idx += 1
    return written

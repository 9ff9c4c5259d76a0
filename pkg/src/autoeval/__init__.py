"""Predict classifier accuracy on unlabeled test sets from feature statistics."""

from .bundles import BundleManifest, FeatureBundle, read_bundle, write_bundle
from .errors import AutoevalError, BundleError, ConfigError
from .kmeans import ClusterModel, assign, kmeans_fit, silhouette_score
from .omfd import EnsembleReport, centroid, omfd_fuse
from .pipeline import (
    EvalResult,
    RunConfig,
    build_config,
    build_training_tables,
    evaluate_rmse,
    run_predict,
    run_train,
)
from .regress import (
    DrmModel,
    TrainedRegressor,
    TrainingTable,
    drm_fit,
    drm_predict,
    fit_base,
    load_model,
    predict,
    save_model,
)
from .scores import atc_fit, atc_predict, conf_score, entropy_score, fid_score
from .shiftdist import (
    GaussianStats,
    ShiftSignature,
    frechet_distance,
    gaussian_fit,
    hungarian_match,
    kcfca_signature,
    psd_sqrt,
)
from .synthgen import ShiftSpec, SynthWorld, gen_shifted_bundle, gen_world, oracle_accuracy

__version__ = "0.1.0"

__all__ = [
    "AutoevalError",
    "BundleError",
    "BundleManifest",
    "ClusterModel",
    "ConfigError",
    "DrmModel",
    "EnsembleReport",
    "EvalResult",
    "FeatureBundle",
    "GaussianStats",
    "RunConfig",
    "ShiftSignature",
    "ShiftSpec",
    "SynthWorld",
    "TrainedRegressor",
    "TrainingTable",
    "assign",
    "atc_fit",
    "atc_predict",
    "build_config",
    "build_training_tables",
    "centroid",
    "conf_score",
    "drm_fit",
    "drm_predict",
    "entropy_score",
    "evaluate_rmse",
    "fid_score",
    "fit_base",
    "frechet_distance",
    "gaussian_fit",
    "gen_shifted_bundle",
    "gen_world",
    "hungarian_match",
    "kcfca_signature",
    "kmeans_fit",
    "load_model",
    "omfd_fuse",
    "oracle_accuracy",
    "predict",
    "psd_sqrt",
    "read_bundle",
    "run_predict",
    "run_train",
    "save_model",
    "silhouette_score",
    "write_bundle",
]

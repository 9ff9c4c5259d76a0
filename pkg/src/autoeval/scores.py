"""Logit- and feature-statistic baselines for accuracy estimation.

Each op turns a bundle into one scalar statistic: mean max-softmax
confidence, normalized prediction entropy, a confidence-threshold count,
or the Fréchet distance between full feature matrices.  The pipeline
maps these through a regressor fit on (score, accuracy) pairs; raw
scores are never treated as accuracies themselves, except for the
threshold count which is already a fraction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundles import FeatureBundle
from .shiftdist import DEFAULT_EPS_SCALE, frechet_distance, gaussian_fit

METHODS = ("conf_score", "entropy", "atc", "fid", "kcfca")


@dataclass(frozen=True)
class MethodScore:
    method: str
    value: float
    bundle_id: str

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not np.isfinite(self.value):
            raise ValueError("score value must be finite")


@dataclass(frozen=True)
class AtcThreshold:
    """Confidence cutoff calibrated so the source pass-rate tracks accuracy."""

    t: float
    source_accuracy: float
    confidence_kind: str = field(default="max_softmax")

    def __post_init__(self) -> None:
        if not (0.0 < self.t <= 1.0):
            raise ValueError("threshold must lie in (0, 1]")
        if not (0.0 <= self.source_accuracy <= 1.0):
            raise ValueError("source accuracy must lie in [0, 1]")
        if self.confidence_kind != "max_softmax":
            raise ValueError(f"unknown confidence kind {self.confidence_kind!r}")


def softmax_rows(logits) -> np.ndarray:
    """Row-wise softmax, stable under large logits."""
    Z = np.asarray(logits, dtype=np.float64)
    if Z.ndim != 2:
        raise ValueError("logits must be 2-D")
    if not np.all(np.isfinite(Z)):
        raise ValueError("logits must be finite")
    shifted = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(shifted)
    return E / E.sum(axis=1, keepdims=True)


def _require_logits(bundle: FeatureBundle) -> np.ndarray:
    if bundle.logits is None:
        raise ValueError(f"bundle {bundle.id!r} has no logits")
    return bundle.logits64()


def max_confidences(bundle: FeatureBundle) -> np.ndarray:
    """Per-row max softmax probability."""
    return softmax_rows(_require_logits(bundle)).max(axis=1)


def conf_score(bundle: FeatureBundle) -> float:
    """Mean max-softmax confidence."""
    return float(max_confidences(bundle).mean())


def entropy_score(bundle: FeatureBundle) -> float:
    """Mean prediction entropy, normalized by ln C into [0, 1]."""
    P = softmax_rows(_require_logits(bundle))
    C = P.shape[1]
    if C == 1:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0.0, P * np.log(P), 0.0)
    return float(-terms.sum(axis=1).mean() / np.log(C))


def _source_accuracy(bundle: FeatureBundle) -> float:
    if bundle.accuracy is not None:
        return bundle.accuracy
    if bundle.labels is not None:
        from .bundles import argmax_agreement

        return argmax_agreement(bundle.logits64(), bundle.labels)
    raise ValueError(f"bundle {bundle.id!r} has neither accuracy nor labels")


def atc_fit(source_bundle: FeatureBundle) -> AtcThreshold:
    """Pick t so the source fraction with confidence > t reaches accuracy.

    t is the largest observed confidence whose strictly-greater fraction
    is >= source accuracy; if no observed value achieves that, t drops
    just below the smallest confidence so every row passes.
    """
    conf = max_confidences(source_bundle)
    acc = _source_accuracy(source_bundle)
    n = conf.size
    asc = np.sort(conf)
    desc = asc[::-1]
    fracs = (n - np.searchsorted(asc, desc, side="right")) / n
    hits = np.flatnonzero(fracs >= acc)
    if hits.size:
        t = float(desc[hits[0]])
    else:
        t = float(asc[0]) - 1e-12
    return AtcThreshold(t=t, source_accuracy=acc)


def atc_predict(th: AtcThreshold, target: FeatureBundle) -> float:
    """Fraction of target rows with confidence above the threshold."""
    conf = max_confidences(target)
    return float(np.count_nonzero(conf > th.t)) / conf.size


def fid_score(
    ref: FeatureBundle, sample: FeatureBundle, eps_scale: float = DEFAULT_EPS_SCALE
) -> float:
    """Fréchet distance between Gaussians fit to the raw feature matrices."""
    if ref.d != sample.d:
        raise ValueError(f"bundle dimension mismatch: {ref.d} vs {sample.d}")
    return frechet_distance(
        gaussian_fit(ref.features64(), eps_scale),
        gaussian_fit(sample.features64(), eps_scale),
    )

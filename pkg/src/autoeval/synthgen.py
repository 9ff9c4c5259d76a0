"""Fully seeded synthetic world with exactly computable accuracy.

Classes are isotropic Gaussians around mutually equidistant means; the
fixed scorer assigns each point to its nearest class mean, with logits
equal to negative squared distances.  Shifts are additive noise, a mean
translation, and class-prior resampling.  Because the scorer is frozen
and labels are known, every generated bundle carries its true accuracy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bundles import FeatureBundle, argmax_agreement


@dataclass(frozen=True)
class SynthWorld:
    """Class geometry plus the nearest-mean scorer implied by it."""

    C: int
    d: int
    class_means: np.ndarray
    class_cov_scale: float
    seed: int

    def __post_init__(self) -> None:
        M = np.ascontiguousarray(np.asarray(self.class_means, dtype=np.float64))
        if M.shape != (self.C, self.d):
            raise ValueError("class_means must be C x d")
        if not np.all(np.isfinite(M)):
            raise ValueError("class means must be finite")
        if not self.class_cov_scale > 0:
            raise ValueError("class_cov_scale must be positive")
        for i in range(self.C):
            for j in range(i + 1, self.C):
                if np.array_equal(M[i], M[j]):
                    raise ValueError(f"class means {i} and {j} coincide")
        M.flags.writeable = False
        object.__setattr__(self, "class_means", M)


@dataclass(frozen=True)
class ShiftSpec:
    """One grid point: how to perturb the world before sampling."""

    noise_sigma: float
    mean_shift: np.ndarray
    class_prior: np.ndarray
    n: int
    seed: int

    def __post_init__(self) -> None:
        shift = np.ascontiguousarray(np.asarray(self.mean_shift, dtype=np.float64))
        prior = np.ascontiguousarray(np.asarray(self.class_prior, dtype=np.float64))
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise ValueError("noise_sigma must be >= 0")
        if shift.ndim != 1 or not np.all(np.isfinite(shift)):
            raise ValueError("mean_shift must be a finite vector")
        if prior.ndim != 1 or np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-9:
            raise ValueError("class_prior must be non-negative and sum to 1")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        shift.flags.writeable = False
        prior.flags.writeable = False
        object.__setattr__(self, "mean_shift", shift)
        object.__setattr__(self, "class_prior", prior)


def _simplex_coords(C: int, separation: float) -> np.ndarray:
    """C mutually equidistant points in C-1 dims, centered at the origin."""
    G = (separation**2 / 2.0) * (np.eye(C) - np.ones((C, C)) / C)
    w, V = np.linalg.eigh(G)
    w = np.clip(w, 0.0, None)
    # largest C-1 eigenvalues carry the simplex; the zero mode is dropped
    coords = (V * np.sqrt(w))[:, 1:]
    return coords


def _random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(A)
    return Q * np.sign(np.diag(R))


def gen_world(
    C: int, d: int, separation: float, seed: int, cov_scale: float = 1.0
) -> SynthWorld:
    """Place C equidistant class means in d dims under a seeded rotation.

    With d < C-1 the simplex cannot embed exactly; the top d simplex
    coordinates are kept and equidistance becomes approximate.
    """
    if C < 2 or d < 1:
        raise ValueError("need C >= 2 and d >= 1")
    if not separation > 0:
        raise ValueError("separation must be positive")
    rng = np.random.default_rng(seed)
    coords = _simplex_coords(C, separation)
    if d >= C - 1:
        M = np.zeros((C, d))
        M[:, : C - 1] = coords
    else:
        M = coords[:, :d].copy()
    M = M @ _random_rotation(d, rng).T
    return SynthWorld(C=C, d=d, class_means=M, class_cov_scale=cov_scale, seed=seed)


def gen_shifted_bundle(
    world: SynthWorld, spec: ShiftSpec, bundle_id: Optional[str] = None
) -> FeatureBundle:
    """Sample one bundle under the shift, scored by the frozen model.

    Draw order is labels, then class noise, then shift noise, so specs
    sharing a seed but varying noise_sigma perturb the same base sample.
    """
    if spec.mean_shift.size != world.d:
        raise ValueError("mean_shift dimension must match the world")
    if spec.class_prior.size != world.C:
        raise ValueError("class_prior length must match the world")
    rng = np.random.default_rng(spec.seed)
    labels = rng.choice(world.C, size=spec.n, p=spec.class_prior)
    class_noise = rng.standard_normal((spec.n, world.d))
    shift_noise = rng.standard_normal((spec.n, world.d))
    X = (
        world.class_means[labels]
        + world.class_cov_scale * class_noise
        + spec.mean_shift
        + spec.noise_sigma * shift_noise
    )
    M = world.class_means
    sq = (X**2).sum(axis=1)[:, None] + (M**2).sum(axis=1)[None, :] - 2.0 * X @ M.T
    logits = -sq
    feats32 = X.astype(np.float32)
    logits32 = logits.astype(np.float32)
    # accuracy from the stored float32 logits, so the bundle invariant is exact
    acc = argmax_agreement(logits32.astype(np.float64), labels)
    return FeatureBundle(
        id=bundle_id if bundle_id is not None else f"synth{spec.seed:06d}",
        features=feats32,
        logits=logits32,
        labels=labels.astype(np.uint32),
        accuracy=acc,
        model_ref=f"nearest_mean(C={world.C},d={world.d},seed={world.seed})",
        source="synthetic",
    )


def oracle_accuracy(bundle: FeatureBundle) -> float:
    """True accuracy: argmax agreement of logits and labels, ties to lowest."""
    if bundle.logits is None:
        raise ValueError(f"bundle {bundle.id!r} has no logits")
    if bundle.labels is None:
        raise ValueError(f"bundle {bundle.id!r} has no labels")
    return argmax_agreement(bundle.logits64(), bundle.labels)

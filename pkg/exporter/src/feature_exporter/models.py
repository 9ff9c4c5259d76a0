"""Checkpoint-backed classifiers.

A checkpoint is an .npz archive holding a two-layer MLP over flattened
pixels: W1 (d_in, h), b1 (h,), W2 (h, C), b2 (C,), plus a "name" string.
The hidden activations are the exported features, the output layer the
exported logits.  Preprocessing is fixed: uint8 pixels scaled by 1/255
and flattened row-major.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ExportError


@dataclass(frozen=True)
class Classifier:
    name: str
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[1]

    def forward(
        self, images: np.ndarray, batch_size: int = 256
    ) -> tuple[np.ndarray, np.ndarray]:
        """Features (relu hidden layer) and logits for a uint8 image stack."""
        if batch_size < 1:
            raise ExportError(f"batch size must be >= 1, got {batch_size}")
        n = images.shape[0]
        flat = images.reshape(n, -1)
        if flat.shape[1] != self.input_dim:
            raise ExportError(
                f"model {self.name!r} expects {self.input_dim} pixels per image,"
                f" dataset has {flat.shape[1]}"
            )
        feats = np.empty((n, self.feature_dim), dtype=np.float32)
        logits = np.empty((n, self.n_classes), dtype=np.float32)
        for start in range(0, n, batch_size):
            chunk = flat[start : start + batch_size].astype(np.float64) / 255.0
            hidden = np.maximum(chunk @ self.w1 + self.b1, 0.0)
            feats[start : start + batch_size] = hidden.astype(np.float32)
            logits[start : start + batch_size] = (hidden @ self.w2 + self.b2).astype(
                np.float32
            )
        return feats, logits


def load_classifier(path: str) -> Classifier:
    if not os.path.isfile(path):
        raise ExportError(f"checkpoint not found: {path}")
    try:
        with np.load(path) as archive:
            required = ("name", "W1", "b1", "W2", "b2")
            missing = [k for k in required if k not in archive]
            if missing:
                raise ExportError(f"{path}: checkpoint missing arrays {missing}")
            name = str(archive["name"])
            w1 = archive["W1"].astype(np.float64)
            b1 = archive["b1"].astype(np.float64)
            w2 = archive["W2"].astype(np.float64)
            b2 = archive["b2"].astype(np.float64)
    except (OSError, ValueError) as exc:
        raise ExportError(f"{path}: not a readable checkpoint: {exc}") from exc
    if w1.ndim != 2 or w2.ndim != 2 or w1.shape[1] != w2.shape[0]:
        raise ExportError(f"{path}: inconsistent layer shapes {w1.shape} / {w2.shape}")
    if b1.shape != (w1.shape[1],) or b2.shape != (w2.shape[1],):
        raise ExportError(f"{path}: bias shapes do not match layers")
    return Classifier(name=name, w1=w1, b1=b1, w2=w2, b2=b2)


def make_demo(
    dataset_path: str,
    checkpoint_path: str,
    classes: int = 4,
    side: int = 16,
    channels: int = 1,
    n: int = 600,
    hidden_extra: int = 12,
    seed: int = 0,
) -> tuple[str, str]:
    """Write a matched synthetic dataset + checkpoint pair.

    Each class is a smooth random pattern; images are noisy copies.  The
    checkpoint's first hidden units are the zero-mean class templates, so
    the model genuinely classifies this data instead of guessing.
    """
    from .datasets import save_dataset

    rng = np.random.default_rng(seed)
    coarse = rng.uniform(0, 1, (classes, 4, 4, channels))
    up = side // 4
    patterns = np.kron(coarse, np.ones((1, up, up, 1)))
    # low contrast on purpose: heavy corruptions must actually cost accuracy
    patterns = (90 + 80 * patterns).astype(np.float64)

    labels = rng.integers(0, classes, size=n)
    noise = rng.normal(0.0, 18.0, size=(n, side, side, channels))
    images = np.clip(patterns[labels] + noise, 0, 255).astype(np.uint8)
    save_dataset(dataset_path, images, labels)

    d_in = side * side * channels
    raw = patterns.reshape(classes, d_in) / 255.0
    mean_vec = raw.mean(axis=0)
    templates = raw - mean_vec
    templates /= np.linalg.norm(templates, axis=1, keepdims=True)

    h = classes + hidden_extra
    w1 = np.zeros((d_in, h))
    w1[:, :classes] = templates.T * 4.0
    w1[:, classes:] = rng.normal(0.0, 0.05, (d_in, hidden_extra))
    b1 = np.zeros(h)
    # center the matched filters so shared brightness cannot outvote class signal
    b1[:classes] = -4.0 * (templates @ mean_vec)
    w2 = rng.normal(0.0, 0.02, (h, classes))
    w2[:classes, :] += 3.0 * np.eye(classes)
    b2 = np.zeros(classes)

    os.makedirs(os.path.dirname(os.path.abspath(checkpoint_path)), exist_ok=True)
    np.savez(
        checkpoint_path,
        name=f"demo-mlp-h{h}",
        W1=w1,
        b1=b1,
        W2=w2,
        b2=b2,
    )
    return dataset_path, checkpoint_path

"""Labeled image datasets stored as .npz archives.

An archive holds "images" (n, H, W, C) uint8 and "labels" (n,) integers.
"""
from __future__ import annotations

import os

import numpy as np

from .errors import ExportError


def load_dataset(path: str) -> tuple[np.ndarray, np.ndarray]:
    if not os.path.isfile(path):
        raise ExportError(f"dataset not found: {path}")
    try:
        with np.load(path) as archive:
            if "images" not in archive or "labels" not in archive:
                raise ExportError(f"{path}: expected arrays 'images' and 'labels'")
            images = archive["images"]
            labels = archive["labels"]
    except (OSError, ValueError) as exc:
        raise ExportError(f"{path}: not a readable npz archive: {exc}") from exc
    if images.ndim != 4:
        raise ExportError(f"images must be (n, H, W, C), got shape {images.shape}")
    if images.dtype != np.uint8:
        raise ExportError(f"images must be uint8, got {images.dtype}")
    if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
        raise ExportError(
            f"labels shape {labels.shape} does not match {images.shape[0]} images"
        )
    if not np.issubdtype(labels.dtype, np.integer):
        raise ExportError(f"labels must be integers, got {labels.dtype}")
    if labels.size and labels.min() < 0:
        raise ExportError("labels must be non-negative")
    return images, labels.astype(np.int64)


def save_dataset(path: str, images: np.ndarray, labels: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.int64)
    if images.ndim != 4 or labels.ndim != 1 or labels.shape[0] != images.shape[0]:
        raise ExportError("save_dataset: images must be (n,H,W,C) with matching labels")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    np.savez(path, images=images, labels=labels)

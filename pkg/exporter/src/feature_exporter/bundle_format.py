"""Writer for the evaluation-side bundle directory format.

Kept self-contained on purpose: the exporter talks to the evaluation
package only through these files on disk, never through its code.

Layout per bundle directory:

- ``manifest.json``: format_version, id, n, d, C, has_logits, has_labels,
  accuracy, model_ref, source (two-space indent, trailing newline)
- ``features.bin``: magic ``FB01``, uint32 n, uint32 d, n*d float32 rows
- ``logits.bin``:   magic ``LG01``, uint32 n, uint32 C, n*C float32 rows
- ``labels.bin``:   magic ``LB01``, uint32 n, n uint32 class indices

All integers are little-endian.  Readers ignore files they do not know,
which is what lets :mod:`feature_exporter.export` add ``export_meta.json``.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import ExportError

FORMAT_VERSION = 1

_FEATURES_MAGIC = b"FB01"
_LOGITS_MAGIC = b"LG01"
_LABELS_MAGIC = b"LB01"


def argmax_accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose highest logit matches the label.

    Computed on the float32 values that get written, so a reader that
    recomputes it from the payload bytes gets the identical number.
    np.argmax already breaks ties toward the lowest class index.
    """
    pred = np.argmax(logits, axis=1)
    return float(np.mean(pred == labels))


def write_bundle_dir(
    directory: str,
    *,
    bundle_id: str,
    features: np.ndarray,
    logits: np.ndarray,
    labels: np.ndarray,
    model_ref: str,
    extra_manifest: dict | None = None,
) -> float:
    """Write one complete bundle directory; returns the stored accuracy.

    extra_manifest entries are appended after the standard keys; readers
    of the base format ignore keys they do not know.
    """
    feats = np.ascontiguousarray(features, dtype="<f4")
    logs = np.ascontiguousarray(logits, dtype="<f4")
    labs = np.ascontiguousarray(labels, dtype="<u4")
    if feats.ndim != 2 or logs.ndim != 2 or labs.ndim != 1:
        raise ExportError(
            f"bad payload ranks: features {feats.ndim}d, logits {logs.ndim}d,"
            f" labels {labs.ndim}d"
        )
    n, d = feats.shape
    c = logs.shape[1]
    if logs.shape[0] != n or labs.shape[0] != n:
        raise ExportError(
            f"row count mismatch: {n} features, {logs.shape[0]} logits,"
            f" {labs.shape[0]} labels"
        )
    if n < 1 or d < 1 or c < 1:
        raise ExportError(f"empty payload: n={n} d={d} C={c}")
    if labs.size and int(labs.max()) >= c:
        raise ExportError(f"label {int(labs.max())} out of range for {c} classes")

    accuracy = argmax_accuracy(logs, labs)
    doc = {
        "format_version": FORMAT_VERSION,
        "id": bundle_id,
        "n": int(n),
        "d": int(d),
        "C": int(c),
        "has_logits": True,
        "has_labels": True,
        "accuracy": accuracy,
        "model_ref": model_ref,
        "source": "exported",
    }
    for key, value in (extra_manifest or {}).items():
        if key in doc:
            raise ExportError(f"extra manifest key {key!r} collides with a base field")
        doc[key] = value
    manifest = json.dumps(doc, indent=2, sort_keys=False)

    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(manifest + "\n")
    _write_payload(os.path.join(directory, "features.bin"), _FEATURES_MAGIC, (n, d), feats)
    _write_payload(os.path.join(directory, "logits.bin"), _LOGITS_MAGIC, (n, c), logs)
    _write_payload(os.path.join(directory, "labels.bin"), _LABELS_MAGIC, (n,), labs)
    return accuracy


def _write_payload(path: str, magic: bytes, dims: tuple, arr: np.ndarray) -> None:
    header = magic + struct.pack("<" + "I" * len(dims), *dims)
    with open(path, "wb") as fh:
        fh.write(header + arr.tobytes(order="C"))

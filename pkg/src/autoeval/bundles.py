"""Feature bundles: one dataset's features plus optional logits, labels and accuracy.

A bundle directory holds a ``manifest.json`` plus little-endian binary payloads:

- ``features.bin``: magic ``FB01``, uint32 n, uint32 d, then n*d float32 row-major
- ``logits.bin``:   magic ``LG01``, uint32 n, uint32 C, then n*C float32 row-major
- ``labels.bin``:   magic ``LB01``, uint32 n, then n uint32 class indices

Payloads are stored as 32-bit values; numeric modules upcast to float64 at the
point of use. Unknown extra files in a bundle directory are ignored so that
external exporters can ship extra metadata.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BundleError

FORMAT_VERSION = 1
SOURCES = ("synthetic", "exported", "unknown")

_FEATURES_MAGIC = b"FB01"
_LOGITS_MAGIC = b"LG01"
_LABELS_MAGIC = b"LB01"

# |stored - recomputed| bound for the argmax-agreement accuracy check
ACCURACY_ATOL = 1e-12


def argmax_agreement(logits: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax logit equals the label (argmax ties go to
    the lowest class index)."""
    pred = np.argmax(np.asarray(logits), axis=1)
    return float(np.mean(pred == np.asarray(labels)))


@dataclass(frozen=True, eq=False)
class FeatureBundle:
    """Immutable container for one dataset's feature statistics.

    Arrays are normalized to their storage dtypes (float32 features/logits,
    uint32 labels) on construction and marked read-only, so a round trip
    through :func:`write_bundle` / :func:`read_bundle` is bit-exact.
    """

    id: str
    features: np.ndarray
    logits: np.ndarray | None = None
    labels: np.ndarray | None = None
    accuracy: float | None = None
    model_ref: str = ""
    source: str = "unknown"
    n_classes: int | None = None

    def __post_init__(self):
        feats = _as_storage(self.features, np.float32, "features", ndim=2)
        object.__setattr__(self, "features", feats)
        if self.logits is not None:
            object.__setattr__(self, "logits", _as_storage(self.logits, np.float32, "logits", ndim=2))
        if self.labels is not None:
            object.__setattr__(self, "labels", _as_labels(self.labels))
        if self.accuracy is not None:
            object.__setattr__(self, "accuracy", float(self.accuracy))
        if self.logits is not None:
            c = self.logits.shape[1]
            if self.n_classes is not None and self.n_classes != c:
                raise BundleError(f"n_classes={self.n_classes} but logits have {c} columns")
            object.__setattr__(self, "n_classes", int(c))
        self._validate()

    def _validate(self) -> None:
        n, d = self.features.shape
        if n < 1 or d < 1:
            raise BundleError(f"features must be at least 1x1, got {n}x{d}")
        if not self.id:
            raise BundleError("bundle id must be non-empty")
        if self.source not in SOURCES:
            raise BundleError(f"unknown source {self.source!r}, expected one of {SOURCES}")
        if self.logits is not None and self.logits.shape[0] != n:
            raise BundleError(
                f"payload shape mismatch: logits have {self.logits.shape[0]} rows, features {n}"
            )
        if self.labels is not None:
            if self.labels.shape[0] != n:
                raise BundleError(
                    f"payload shape mismatch: {self.labels.shape[0]} labels for {n} feature rows"
                )
            if self.n_classes is None:
                raise BundleError("labels present but class count unknown: pass n_classes")
            if self.labels.size and int(self.labels.max()) >= self.n_classes:
                raise BundleError(
                    f"label {int(self.labels.max())} out of range for {self.n_classes} classes"
                )
        if self.n_classes is not None and self.n_classes < 1:
            raise BundleError("n_classes must be >= 1")
        if self.accuracy is not None and not (0.0 <= self.accuracy <= 1.0):
            raise BundleError(f"accuracy {self.accuracy} outside [0, 1]")
        if self.accuracy is not None and self.logits is not None and self.labels is not None:
            recomputed = argmax_agreement(self.logits, self.labels)
            if abs(recomputed - self.accuracy) > ACCURACY_ATOL:
                raise BundleError(
                    f"stored accuracy {self.accuracy} disagrees with argmax agreement {recomputed}"
                )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def features64(self) -> np.ndarray:
        """Features upcast to float64 for numeric work."""
        return self.features.astype(np.float64)

    def logits64(self) -> np.ndarray:
        if self.logits is None:
            raise BundleError(f"bundle {self.id!r} has no logits")
        return self.logits.astype(np.float64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureBundle):
            return NotImplemented
        return (
            self.id == other.id
            and self.model_ref == other.model_ref
            and self.source == other.source
            and self.n_classes == other.n_classes
            and self.accuracy == other.accuracy
            and np.array_equal(self.features, other.features)
            and _opt_equal(self.logits, other.logits)
            and _opt_equal(self.labels, other.labels)
        )


@dataclass(frozen=True)
class BundleManifest:
    """JSON-serializable summary of a bundle directory's payloads."""

    id: str
    n: int
    d: int
    C: int | None
    has_logits: bool
    has_labels: bool
    accuracy: float | None
    model_ref: str
    source: str
    format_version: int = FORMAT_VERSION

    @classmethod
    def of(cls, bundle: FeatureBundle) -> "BundleManifest":
        return cls(
            id=bundle.id,
            n=bundle.n,
            d=bundle.d,
            C=bundle.n_classes,
            has_logits=bundle.logits is not None,
            has_labels=bundle.labels is not None,
            accuracy=bundle.accuracy,
            model_ref=bundle.model_ref,
            source=bundle.source,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "format_version": self.format_version,
                "id": self.id,
                "n": self.n,
                "d": self.d,
                "C": self.C,
                "has_logits": self.has_logits,
                "has_labels": self.has_labels,
                "accuracy": self.accuracy,
                "model_ref": self.model_ref,
                "source": self.source,
            },
            indent=2,
            sort_keys=False,
        )

    @classmethod
    def from_json(cls, text: str) -> "BundleManifest":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise BundleError(f"manifest is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise BundleError("manifest must be a JSON object")
        try:
            m = cls(
                id=str(raw["id"]),
                n=int(raw["n"]),
                d=int(raw["d"]),
                C=None if raw.get("C") is None else int(raw["C"]),
                has_logits=bool(raw["has_logits"]),
                has_labels=bool(raw["has_labels"]),
                accuracy=None if raw.get("accuracy") is None else float(raw["accuracy"]),
                model_ref=str(raw.get("model_ref", "")),
                source=str(raw.get("source", "unknown")),
                format_version=int(raw.get("format_version", -1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BundleError(f"manifest missing or malformed field: {exc}") from exc
        if m.format_version != FORMAT_VERSION:
            raise BundleError(f"unsupported manifest format_version {m.format_version}")
        return m


def write_bundle(bundle: FeatureBundle, directory: str | Path) -> None:
    """Write ``bundle`` to ``directory`` (created if missing).

    The bundle is re-validated first so that a malformed value never leaves a
    partial directory behind.
    """
    bundle._validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "manifest.json").write_text(BundleManifest.of(bundle).to_json() + "\n", encoding="utf-8")
    _write_payload(
        directory / "features.bin", _FEATURES_MAGIC, (bundle.n, bundle.d), bundle.features
    )
    if bundle.logits is not None:
        _write_payload(
            directory / "logits.bin", _LOGITS_MAGIC, (bundle.n, bundle.n_classes), bundle.logits
        )
    if bundle.labels is not None:
        _write_payload(directory / "labels.bin", _LABELS_MAGIC, (bundle.n,), bundle.labels)


def read_bundle(directory: str | Path) -> FeatureBundle:
    """Read and fully validate a bundle directory written by :func:`write_bundle`
    (or any exporter emitting the same format)."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise BundleError(f"missing manifest: {manifest_path}")
    manifest = BundleManifest.from_json(manifest_path.read_text(encoding="utf-8"))

    features = _read_payload(
        directory / "features.bin", _FEATURES_MAGIC, (manifest.n, manifest.d), np.dtype("<f4")
    )
    logits = None
    if manifest.has_logits:
        if manifest.C is None:
            raise BundleError("manifest declares logits but no class count C")
        logits = _read_payload(
            directory / "logits.bin", _LOGITS_MAGIC, (manifest.n, manifest.C), np.dtype("<f4")
        )
    labels = None
    if manifest.has_labels:
        labels = _read_payload(
            directory / "labels.bin", _LABELS_MAGIC, (manifest.n,), np.dtype("<u4")
        )
    return FeatureBundle(
        id=manifest.id,
        features=features,
        logits=logits,
        labels=labels,
        accuracy=manifest.accuracy,
        model_ref=manifest.model_ref,
        source=manifest.source,
        n_classes=manifest.C,
    )


def _as_storage(arr, dtype, name: str, ndim: int) -> np.ndarray:
    try:
        out = np.ascontiguousarray(arr, dtype=dtype)
    except (TypeError, ValueError) as exc:
        raise BundleError(f"{name} not convertible to {np.dtype(dtype).name}: {exc}") from exc
    if out.ndim != ndim:
        raise BundleError(f"{name} must be {ndim}-dimensional, got shape {out.shape}")
    out.setflags(write=False)
    return out


def _as_labels(arr) -> np.ndarray:
    raw = np.asarray(arr)
    if raw.ndim != 1:
        raise BundleError(f"labels must be a vector, got shape {raw.shape}")
    if raw.size and (not np.issubdtype(raw.dtype, np.integer)):
        if not np.all(raw == np.floor(raw)):
            raise BundleError("labels must be integers")
    if raw.size:
        as_int = np.asarray(raw, dtype=np.int64)
        if np.any(as_int < 0) or np.any(as_int >= 2**32):
            raise BundleError("labels must fit in an unsigned 32-bit integer")
    out = np.ascontiguousarray(raw, dtype=np.uint32)
    out.setflags(write=False)
    return out


def _opt_equal(a: np.ndarray | None, b: np.ndarray | None) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


def _write_payload(path: Path, magic: bytes, dims: tuple, arr: np.ndarray) -> None:
    header = magic + struct.pack("<" + "I" * len(dims), *dims)
    if arr.dtype == np.float32:
        body = arr.astype("<f4", copy=False).tobytes(order="C")
    else:
        body = arr.astype("<u4", copy=False).tobytes(order="C")
    path.write_bytes(header + body)


def _read_payload(path: Path, magic: bytes, dims: tuple, dtype: np.dtype) -> np.ndarray:
    if not path.is_file():
        raise BundleError(f"missing payload file: {path}")
    blob = path.read_bytes()
    header_len = len(magic) + 4 * len(dims)
    if len(blob) < header_len:
        raise BundleError(f"{path.name}: truncated header")
    if blob[: len(magic)] != magic:
        raise BundleError(f"{path.name}: bad magic {blob[:len(magic)]!r}, expected {magic!r}")
    got_dims = struct.unpack("<" + "I" * len(dims), blob[len(magic) : header_len])
    if got_dims != tuple(dims):
        raise BundleError(
            f"{path.name}: payload shape mismatch, header says {got_dims}, manifest says {tuple(dims)}"
        )
    count = int(np.prod(dims, dtype=np.int64))
    expected = header_len + count * dtype.itemsize
    if len(blob) != expected:
        raise BundleError(f"{path.name}: expected {expected} bytes, found {len(blob)}")
    flat = np.frombuffer(blob, dtype=dtype, count=count, offset=header_len)
    return flat.reshape(dims).copy()

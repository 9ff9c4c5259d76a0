import numpy as np
import pytest

from autoeval.bundles import (
    BundleManifest,
    FeatureBundle,
    read_bundle,
    write_bundle,
)
from autoeval.errors import BundleError


def make_bundle(**kw):
    defaults = dict(
        id="b0",
        features=[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]],
        model_ref="m0",
        source="unknown",
    )
    defaults.update(kw)
    return FeatureBundle(**defaults)


def test_round_trip_features_only(tmp_path):
    b = make_bundle()
    write_bundle(b, tmp_path / "b")
    assert sorted(p.name for p in (tmp_path / "b").iterdir()) == ["features.bin", "manifest.json"]
    assert read_bundle(tmp_path / "b") == b


def test_round_trip_full(tmp_path):
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(5, 3)).astype(np.float32)
    labels = np.argmax(logits, axis=1)
    b = make_bundle(
        features=rng.normal(size=(5, 4)),
        logits=logits,
        labels=labels,
        accuracy=1.0,
        source="synthetic",
    )
    write_bundle(b, tmp_path / "b")
    back = read_bundle(tmp_path / "b")
    assert back == b
    # payloads are bit-exact, not merely close
    assert back.features.tobytes() == b.features.tobytes()
    assert back.logits.tobytes() == b.logits.tobytes()
    assert back.labels.tobytes() == b.labels.tobytes()


def test_minimal_payload_byte_count(tmp_path):
    # 4 magic bytes + two 4-byte dims + one float32
    b = FeatureBundle(id="tiny", features=[[0.0]])
    write_bundle(b, tmp_path / "b")
    assert (tmp_path / "b" / "features.bin").stat().st_size == 12 + 4


def test_logits_row_mismatch_rejected():
    with pytest.raises(BundleError, match="payload shape mismatch"):
        make_bundle(logits=np.zeros((3, 2)))


def test_labels_length_mismatch_rejected():
    with pytest.raises(BundleError, match="payload shape mismatch"):
        make_bundle(labels=[0, 1, 0], n_classes=2)


def test_label_out_of_range_rejected():
    with pytest.raises(BundleError, match="out of range"):
        make_bundle(labels=[0, 2], n_classes=2)


def test_labels_without_class_count_rejected():
    with pytest.raises(BundleError, match="class count"):
        make_bundle(labels=[0, 1])


def test_accuracy_out_of_bounds_rejected():
    with pytest.raises(BundleError, match="accuracy"):
        make_bundle(accuracy=1.5)


def test_accuracy_consistency_checked():
    logits = np.array([[2.0, 0.0], [0.0, 2.0]])
    # argmax matches the label on row 0 only -> agreement is exactly 0.5
    make_bundle(logits=logits, labels=[0, 0], accuracy=0.5)
    with pytest.raises(BundleError, match="disagrees"):
        make_bundle(logits=logits, labels=[0, 0], accuracy=1.0)


def test_manifest_dim_mismatch_rejected(tmp_path):
    b = make_bundle()
    write_bundle(b, tmp_path / "b")
    # rewrite the manifest claiming one more row than the payload holds
    manifest = BundleManifest.of(b)
    text = manifest.to_json().replace('"n": 2', '"n": 5')
    (tmp_path / "b" / "manifest.json").write_text(text)
    with pytest.raises(BundleError, match="shape mismatch"):
        read_bundle(tmp_path / "b")


def test_bad_magic_rejected(tmp_path):
    b = make_bundle()
    write_bundle(b, tmp_path / "b")
    path = tmp_path / "b" / "features.bin"
    blob = bytearray(path.read_bytes())
    blob[:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(BundleError, match="bad magic"):
        read_bundle(tmp_path / "b")


def test_truncated_payload_rejected(tmp_path):
    b = make_bundle()
    write_bundle(b, tmp_path / "b")
    path = tmp_path / "b" / "features.bin"
    path.write_bytes(path.read_bytes()[:-2])
    with pytest.raises(BundleError, match="bytes"):
        read_bundle(tmp_path / "b")


def test_missing_manifest_rejected(tmp_path):
    with pytest.raises(BundleError, match="manifest"):
        read_bundle(tmp_path)


def test_unknown_extra_files_ignored(tmp_path):
    b = make_bundle()
    write_bundle(b, tmp_path / "b")
    (tmp_path / "b" / "notes.txt").write_text("left by an exporter")
    assert read_bundle(tmp_path / "b") == b


def test_round_trip_many_seeded_shapes(tmp_path):
    rng = np.random.default_rng(7)
    for i in range(20):
        n = int(rng.integers(1, 12))
        d = int(rng.integers(1, 9))
        c = int(rng.integers(2, 6))
        logits = rng.normal(size=(n, c)) if rng.random() < 0.5 else None
        labels = rng.integers(0, c, size=n) if logits is not None and rng.random() < 0.7 else None
        b = FeatureBundle(
            id=f"rt{i}",
            features=rng.normal(size=(n, d)),
            logits=logits,
            labels=labels,
            n_classes=c if labels is not None else None,
            source="synthetic",
        )
        write_bundle(b, tmp_path / f"b{i}")
        assert read_bundle(tmp_path / f"b{i}") == b


def test_storage_is_float32_and_readonly():
    b = make_bundle(features=np.array([[0.1, 0.2]], dtype=np.float64))
    assert b.features.dtype == np.float32
    with pytest.raises(ValueError):
        b.features[0, 0] = 9.0

import math

import numpy as np
import pytest

from autoeval.bundles import FeatureBundle
from autoeval.scores import (
    AtcThreshold,
    MethodScore,
    atc_fit,
    atc_predict,
    conf_score,
    entropy_score,
    fid_score,
    max_confidences,
    softmax_rows,
)


def bundle_with_probs(probs, labels=None, accuracy=None, bid="b"):
    """Bundle whose softmax rows equal the given probability rows."""
    P = np.asarray(probs, dtype=np.float64)
    logits = np.log(P)
    return FeatureBundle(
        id=bid,
        features=np.zeros((P.shape[0], 2), dtype=np.float32),
        logits=logits.astype(np.float32),
        labels=None if labels is None else np.asarray(labels),
        accuracy=accuracy,
    )


def conf_bundle(confidences, accuracy=None, labels=None, bid="b"):
    """C=10 bundle whose max-softmax confidences equal the given values.

    Each row puts mass c on class 0 and spreads the rest evenly, so any
    c >= 0.1 is representable as the row maximum.
    """
    rows = [[c] + [(1.0 - c) / 9.0] * 9 for c in confidences]
    return bundle_with_probs(rows, labels=labels, accuracy=accuracy, bid=bid)


# --- softmax ---


def test_softmax_symmetric_row():
    np.testing.assert_allclose(softmax_rows([[0.0, 0.0]]), [[0.5, 0.5]], atol=1e-15)


def test_softmax_large_logits_stable():
    P = softmax_rows([[1000.0, 0.0]])
    assert np.all(np.isfinite(P))
    assert P[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_softmax_log_ratio():
    P = softmax_rows([[math.log(1.0), math.log(3.0)]])
    np.testing.assert_allclose(P, [[0.25, 0.75]], atol=1e-12)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    P = softmax_rows(rng.normal(scale=5.0, size=(50, 7)))
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)


def test_softmax_rejects_nonfinite():
    with pytest.raises(ValueError, match="finite"):
        softmax_rows([[np.inf, 0.0]])


# --- conf / entropy ---


def test_conf_score_mean_of_maxima():
    b = bundle_with_probs([[0.9, 0.1], [0.6, 0.4]])
    # float32 logit storage allows only float32-level agreement with 0.75
    assert conf_score(b) == pytest.approx(0.75, abs=1e-6)
    exact = softmax_rows(b.logits64()).max(axis=1).mean()
    assert conf_score(b) == exact


def test_conf_score_uniform_lower_bound():
    b = FeatureBundle(
        id="u",
        features=np.zeros((6, 2), dtype=np.float32),
        logits=np.zeros((6, 10), dtype=np.float32),
    )
    assert conf_score(b) == pytest.approx(0.1, abs=1e-12)


def test_conf_score_saturated():
    logits = np.zeros((4, 3), dtype=np.float32)
    logits[:, 0] = 1000.0
    b = FeatureBundle(id="s", features=np.zeros((4, 2), dtype=np.float32), logits=logits)
    assert conf_score(b) == pytest.approx(1.0, abs=1e-9)


def test_entropy_uniform_is_one():
    b = FeatureBundle(
        id="u",
        features=np.zeros((5, 2), dtype=np.float32),
        logits=np.zeros((5, 4), dtype=np.float32),
    )
    assert entropy_score(b) == pytest.approx(1.0, abs=1e-12)


def test_entropy_deterministic_is_zero():
    logits = np.zeros((5, 4), dtype=np.float32)
    logits[:, 2] = 1000.0
    b = FeatureBundle(id="d", features=np.zeros((5, 2), dtype=np.float32), logits=logits)
    assert entropy_score(b) == pytest.approx(0.0, abs=1e-9)


def test_entropy_hand_value():
    b = bundle_with_probs([[0.25, 0.75]])
    expected = -(0.25 * math.log(0.25) + 0.75 * math.log(0.75)) / math.log(2.0)
    assert expected == pytest.approx(0.811278, abs=1e-6)
    assert entropy_score(b) == pytest.approx(expected, abs=1e-7)


def test_scores_require_logits():
    b = FeatureBundle(id="f", features=np.zeros((3, 2), dtype=np.float32))
    for fn in (conf_score, entropy_score):
        with pytest.raises(ValueError, match="logits"):
            fn(b)


def test_shift_invariance():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(30, 6))
    shifted = logits + rng.normal(scale=100.0, size=(30, 1))
    a = FeatureBundle(
        id="a", features=np.zeros((30, 2), dtype=np.float32), logits=logits.astype(np.float32)
    )
    # shift applied in float64 after load to keep the comparison bit-tight
    cs_a = conf_score(a)
    es_a = entropy_score(a)
    P_shift = softmax_rows(a.logits64() + 123.0)
    assert P_shift.max(axis=1).mean() == pytest.approx(cs_a, abs=1e-12)
    C = P_shift.shape[1]
    ent = -(np.where(P_shift > 0, P_shift * np.log(P_shift), 0.0)).sum(axis=1).mean()
    assert ent / np.log(C) == pytest.approx(es_a, abs=1e-12)
    del shifted


# --- ATC ---


def test_atc_fit_hand_trace():
    b = conf_bundle([0.9, 0.8, 0.6, 0.4], labels=[0, 0, 1, 1])
    th = atc_fit(b)
    assert th.source_accuracy == pytest.approx(0.5)
    assert th.t == pytest.approx(0.6, abs=1e-6)


def test_atc_boundaries():
    b_hi = conf_bundle([0.9, 0.8, 0.6, 0.4], accuracy=1.0)
    th_hi = atc_fit(b_hi)
    assert th_hi.t < max_confidences(b_hi).min()
    assert atc_predict(th_hi, b_hi) == 1.0

    b_lo = conf_bundle([0.9, 0.8, 0.6, 0.4], accuracy=0.0)
    th_lo = atc_fit(b_lo)
    assert th_lo.t >= 0.9 - 1e-6
    assert atc_predict(th_lo, b_lo) == 0.0


def test_atc_predict_hand_trace():
    th = AtcThreshold(t=0.6, source_accuracy=0.5)
    target = conf_bundle([0.95, 0.5, 0.3, 0.1])
    assert atc_predict(th, target) == pytest.approx(0.25)


def test_atc_all_below_threshold():
    th = AtcThreshold(t=0.99, source_accuracy=0.5)
    assert atc_predict(th, conf_bundle([0.6, 0.7, 0.8])) == 0.0


def test_atc_self_consistency_within_quantization():
    rng = np.random.default_rng(8)
    for trial in range(10):
        n = int(rng.integers(20, 200))
        conf = rng.uniform(0.5, 1.0, size=n)
        acc = float(rng.uniform(0.0, 1.0))
        b = conf_bundle(conf, accuracy=None, bid=f"t{trial}")
        b = FeatureBundle(
            id=b.id, features=b.features, logits=b.logits, accuracy=round(acc * n) / n
        )
        th = atc_fit(b)
        assert abs(atc_predict(th, b) - b.accuracy) <= 1.0 / n + 1e-12


def test_atc_threshold_validation():
    with pytest.raises(ValueError, match="threshold"):
        AtcThreshold(t=0.0, source_accuracy=0.5)
    with pytest.raises(ValueError, match="accuracy"):
        AtcThreshold(t=0.5, source_accuracy=1.5)


# --- FID ---


def test_fid_identical_bundles():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(100, 4)).astype(np.float32)
    a = FeatureBundle(id="a", features=X)
    b = FeatureBundle(id="b", features=X.copy())
    assert fid_score(a, b) == pytest.approx(0.0, abs=1e-8)


def test_fid_translation_is_mean_gap():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(2000, 3))
    v = np.array([3.0, 0.0, 4.0])  # norm 5
    a = FeatureBundle(id="a", features=X.astype(np.float32))
    b = FeatureBundle(id="b", features=(X + v).astype(np.float32))
    assert fid_score(a, b) == pytest.approx(5.0, abs=1e-3)


def test_fid_dimension_mismatch():
    a = FeatureBundle(id="a", features=np.zeros((5, 2), dtype=np.float32))
    b = FeatureBundle(id="b", features=np.zeros((5, 3), dtype=np.float32))
    with pytest.raises(ValueError, match="mismatch"):
        fid_score(a, b)


def test_fid_grows_with_noise():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(500, 3))
    ref = FeatureBundle(id="r", features=X.astype(np.float32))
    vals = []
    for sigma in (0.5, 1.0, 2.0):
        noise = np.random.default_rng(9).normal(scale=sigma, size=X.shape)
        vals.append(fid_score(ref, FeatureBundle(id="s", features=(X + noise).astype(np.float32))))
    assert vals[0] < vals[1] < vals[2]


# --- score rows ---


def test_method_score_validation():
    MethodScore(method="fid", value=1.5, bundle_id="x")
    with pytest.raises(ValueError, match="method"):
        MethodScore(method="rotation", value=0.5, bundle_id="x")
    with pytest.raises(ValueError, match="finite"):
        MethodScore(method="fid", value=float("nan"), bundle_id="x")


def test_conf_entropy_ranges():
    rng = np.random.default_rng(6)
    for trial in range(5):
        C = int(rng.integers(2, 8))
        b = FeatureBundle(
            id=f"r{trial}",
            features=np.zeros((40, 2), dtype=np.float32),
            logits=rng.normal(scale=3.0, size=(40, C)).astype(np.float32),
        )
        assert 1.0 / C - 1e-12 <= conf_score(b) <= 1.0
        assert 0.0 <= entropy_score(b) <= 1.0
        assert max_confidences(b).shape == (40,)

import numpy as np
import pytest

from autoeval.regress import (
    BASE_KINDS,
    DrmModel,
    TrainedRegressor,
    TrainingTable,
    drm_fit,
    drm_predict,
    drm_predict_many,
    fit_base,
    load_model,
    oof_matrix,
    predict,
    predict_many,
    save_model,
    solve_meta_weights,
)


def linear_table(n=40, seed=0, noise=0.02):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 4.0, size=(n, 1))
    y = np.clip(0.2 * X[:, 0] + 0.1 + rng.normal(scale=noise, size=n), 0.0, 1.0)
    return TrainingTable(X=X, y=y, ids=[f"r{i}" for i in range(n)])


def const_regressor(value):
    return TrainedRegressor(
        kind="ols", feature_dim=1, params={"weights": np.zeros(1), "intercept": value}
    )


# --- TrainingTable ---


def test_table_validation():
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        TrainingTable(X=np.zeros((2, 1)), y=np.array([0.5, 1.5]), ids=["a", "b"])
    with pytest.raises(ValueError, match="mismatch"):
        TrainingTable(X=np.zeros((2, 1)), y=np.array([0.5]), ids=["a"])
    with pytest.raises(ValueError, match="finite"):
        TrainingTable(X=np.array([[np.nan]]), y=np.array([0.5]), ids=["a"])


def test_table_from_rows_and_subset():
    t = TrainingTable.from_rows([(0.5, 0.9, "a"), (1.5, 0.8, "b"), (2.5, 0.7, "c")])
    assert t.n == 3 and t.p == 1
    s = t.subset([2, 0])
    assert s.ids == ("c", "a")
    np.testing.assert_array_equal(s.y, [0.7, 0.9])


# --- base regressors ---


def test_ols_exact_line():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    t = TrainingTable(X=X, y=0.2 * X[:, 0] + 0.1, ids=list("abcd"))
    r = fit_base("ols", t)
    assert r.params["weights"][0] == pytest.approx(0.2, abs=1e-9)
    assert r.params["intercept"] == pytest.approx(0.1, abs=1e-9)


def test_ols_prediction_clamps():
    r = TrainedRegressor(
        kind="ols", feature_dim=1, params={"weights": np.array([2.0]), "intercept": 1.0}
    )
    # raw value 1.4 clamps to the accuracy range
    assert predict(r, [0.2]) == 1.0
    r_neg = TrainedRegressor(
        kind="ols", feature_dim=1, params={"weights": np.array([2.0]), "intercept": -3.0}
    )
    assert predict(r_neg, [0.2]) == 0.0


def test_knn_full_neighborhood_is_mean():
    t = linear_table(n=12, seed=1)
    r = fit_base("knn", t, hyper={"k_neighbors": 12})
    for x in (0.0, 1.7, 9.0):
        assert predict(r, [x]) == pytest.approx(t.y.mean(), abs=1e-12)


def test_knn_k1_returns_training_target():
    t = linear_table(n=15, seed=2)
    r = fit_base("knn", t, hyper={"k_neighbors": 1})
    for i in range(t.n):
        assert predict(r, t.X[i]) == t.y[i]


def test_knn_distance_tie_prefers_lower_row():
    t = TrainingTable(
        X=np.array([[0.0], [2.0], [5.0]]), y=np.array([0.1, 0.9, 0.5]), ids=list("abc")
    )
    r = fit_base("knn", t, hyper={"k_neighbors": 1})
    # x=1 ties between rows 0 and 1; lowest index wins
    assert predict(r, [1.0]) == pytest.approx(0.1)


def test_forest_constant_target():
    rng = np.random.default_rng(5)
    t = TrainingTable(
        X=rng.normal(size=(25, 2)), y=np.full(25, 0.7), ids=[str(i) for i in range(25)]
    )
    r = fit_base("random_forest", t, seed=9)
    preds = predict_many(r, rng.normal(size=(10, 2)))
    np.testing.assert_allclose(preds, 0.7, atol=1e-12)


def test_forest_predictions_within_target_range():
    for seed in range(4):
        t = linear_table(n=60, seed=seed, noise=0.05)
        r = fit_base("random_forest", t, seed=seed)
        q = np.random.default_rng(seed + 100).uniform(-2.0, 6.0, size=(30, 1))
        preds = predict_many(r, q)
        assert preds.min() >= t.y.min() - 1e-12
        assert preds.max() <= t.y.max() + 1e-12


def test_forest_learns_step_function():
    X = np.linspace(0.0, 1.0, 80)[:, None]
    y = np.where(X[:, 0] < 0.5, 0.2, 0.8)
    t = TrainingTable(X=X, y=y, ids=[str(i) for i in range(80)])
    r = fit_base("random_forest", t, seed=0)
    assert predict(r, [0.1]) == pytest.approx(0.2, abs=0.05)
    assert predict(r, [0.9]) == pytest.approx(0.8, abs=0.05)


def test_kernel_ridge_fits_smooth_curve():
    rng = np.random.default_rng(11)
    X = np.sort(rng.uniform(0.0, 3.0, size=(50, 1)), axis=0)
    y = 0.5 + 0.3 * np.sin(X[:, 0])
    t = TrainingTable(X=X, y=y, ids=[str(i) for i in range(50)])
    r = fit_base("kernel_ridge", t)
    grid = np.linspace(0.3, 2.7, 9)[:, None]
    np.testing.assert_allclose(
        predict_many(r, grid), 0.5 + 0.3 * np.sin(grid[:, 0]), atol=0.02
    )


def test_fit_base_errors():
    t = linear_table(n=10)
    with pytest.raises(ValueError, match="kind"):
        fit_base("mlp", t)
    with pytest.raises(ValueError, match="hyperparameters"):
        fit_base("knn", t, hyper={"bandwidth": 1.0})
    with pytest.raises(ValueError, match="2 rows"):
        fit_base("ols", t.subset([0]))


def test_predict_dimension_mismatch():
    r = fit_base("ols", linear_table())
    with pytest.raises(ValueError, match="expected"):
        predict(r, [1.0, 2.0])


# --- stacking ---


def test_meta_weights_pick_exact_base():
    y = np.linspace(0.1, 0.9, 20)
    P = np.column_stack([y, y + 10.0])
    w = solve_meta_weights(P, y)
    np.testing.assert_allclose(w, [1.0, 0.0], atol=1e-10)


def test_meta_weights_zero_target_falls_back_equal():
    P = np.abs(np.random.default_rng(0).normal(size=(12, 3)))
    w = solve_meta_weights(P, np.zeros(12))
    np.testing.assert_allclose(w, [1 / 3, 1 / 3, 1 / 3])


def test_single_base_weight_near_one():
    t = linear_table(n=60, seed=3, noise=0.01)
    m = drm_fit(t, base_kinds=("ols",), seed=3)
    assert m.meta_weights[0] == pytest.approx(1.0, abs=0.05)
    x = np.array([[1.3]])
    assert drm_predict_many(m, x)[0] == pytest.approx(
        m.meta_weights[0] * predict_many(m.bases[0], x)[0]
    )


def test_stacking_beats_every_single_column():
    t = linear_table(n=50, seed=7, noise=0.03)
    P = oof_matrix(t, folds=5, seed=7)
    w = solve_meta_weights(P, t.y)
    obj = ((P @ w - t.y) ** 2).sum()
    per_column = ((P - t.y[:, None]) ** 2).sum(axis=0)
    assert obj <= per_column.min() + 1e-9


def test_meta_weights_satisfy_kkt():
    t = linear_table(n=50, seed=13, noise=0.03)
    P = oof_matrix(t, folds=5, seed=13)
    w = solve_meta_weights(P, t.y)
    grad = 2.0 * P.T @ (P @ w - t.y)
    for wi, gi in zip(w, grad):
        assert wi == 0.0 or abs(gi) <= 1e-6


def test_drm_deterministic():
    t = linear_table(n=45, seed=21, noise=0.05)
    a = drm_fit(t, seed=4)
    b = drm_fit(t, seed=4)
    np.testing.assert_array_equal(a.meta_weights, b.meta_weights)
    q = np.linspace(0.0, 4.0, 7)[:, None]
    np.testing.assert_array_equal(drm_predict_many(a, q), drm_predict_many(b, q))


def test_drm_vote_mode():
    t = linear_table(n=40, seed=2)
    m = drm_fit(t, folds=4, seed=2, vote=True)
    np.testing.assert_allclose(m.meta_weights, 0.25)


def test_drm_predict_weighted_sum():
    m = DrmModel(
        bases=(const_regressor(0.4), const_regressor(0.6)),
        meta_weights=np.array([0.5, 0.5]),
        folds=2,
    )
    assert drm_predict(m, [0.0]) == pytest.approx(0.5)
    m1 = DrmModel(
        bases=(const_regressor(0.4), const_regressor(0.6)),
        meta_weights=np.array([1.0, 0.0]),
        folds=2,
    )
    assert drm_predict(m1, [0.0]) == pytest.approx(0.4)


def test_drm_model_validation():
    with pytest.raises(ValueError, match="weight"):
        DrmModel(bases=(const_regressor(0.5),), meta_weights=np.array([0.5, 0.5]), folds=2)
    with pytest.raises(ValueError, match="positive"):
        DrmModel(
            bases=(const_regressor(0.5),), meta_weights=np.array([0.0]), folds=2
        )


def test_drm_fit_errors():
    t = linear_table(n=8)
    with pytest.raises(ValueError, match="folds"):
        drm_fit(t, folds=1)
    with pytest.raises(ValueError, match="2 rows per fold"):
        drm_fit(t, folds=5)


def test_predictions_stay_in_unit_interval():
    t = linear_table(n=50, seed=31, noise=0.1)
    m = drm_fit(t, seed=31)
    q = np.random.default_rng(0).uniform(-50.0, 50.0, size=(40, 1))
    preds = drm_predict_many(m, q)
    assert preds.min() >= 0.0 and preds.max() <= 1.0
    for kind in BASE_KINDS:
        r = fit_base(kind, t, seed=31)
        p = predict_many(r, q)
        assert p.min() >= 0.0 and p.max() <= 1.0


# --- persistence ---


@pytest.mark.parametrize("kind", BASE_KINDS)
def test_save_load_reload_exact(kind, tmp_path):
    t = linear_table(n=35, seed=17, noise=0.04)
    r = fit_base(kind, t, seed=17)
    path = str(tmp_path / f"{kind}.json")
    save_model(r, path)
    r2 = load_model(path)
    q = np.random.default_rng(1).uniform(-1.0, 5.0, size=(25, 1))
    np.testing.assert_array_equal(predict_many(r, q), predict_many(r2, q))


def test_save_load_drm_exact(tmp_path):
    t = linear_table(n=40, seed=19, noise=0.04)
    m = drm_fit(t, seed=19)
    path = str(tmp_path / "drm.json")
    save_model(m, path)
    m2 = load_model(path)
    np.testing.assert_array_equal(m.meta_weights, m2.meta_weights)
    q = np.random.default_rng(2).uniform(0.0, 4.0, size=(25, 1))
    np.testing.assert_array_equal(drm_predict_many(m, q), drm_predict_many(m2, q))


def test_load_rejects_unknown_tag(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"model": "mystery"}')
    with pytest.raises(ValueError, match="unknown model tag"):
        load_model(str(path))

import json
import warnings

import numpy as np
import pytest

from gridcast.ensemble import (
    BASE_PRED_GROUP, EnsembleSettings, OOFMatrix, StackedHourEnsemble, blend, ensemble_predict,
    ensemble_select, fit_hour_ensemble, fold_bounds, generate_oof, train_stack_layer,
)
from gridcast.errors import ColumnMismatch, EmptyCandidates, NonpositiveGroundtruth, TooFewRows
from gridcast.features import DAY1, FeatureMatrix
from gridcast.sublearners import DegenerateTarget, SublearnerSpec, train_gbdt

from oracles import Memorizer, mape_direct, memorize


def matrix(values, names=None):
    values = np.asarray(values, dtype=float)
    names = names or tuple(f"x{j}" for j in range(values.shape[1]))
    return FeatureMatrix(tuple(names), values, {n: "raw" for n in names})


def constant_model(c, columns):
    X = matrix(np.zeros((20, len(columns))), columns)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateTarget)
        return train_gbdt(X, np.full(20, float(c)), SublearnerSpec("gbdt_a"))


def test_fold_sizes():
    assert [hi - lo for lo, hi in fold_bounds(100, 5)] == [20] * 5
    assert [hi - lo for lo, hi in fold_bounds(12, 5)] == [3, 3, 2, 2, 2]
    assert fold_bounds(12, 5)[-1][1] == 12


def test_oof_folds_are_contiguous_and_complete():
    rng = np.random.default_rng(0)
    X, y = matrix(rng.normal(size=(100, 2))), rng.normal(size=100)
    oof = generate_oof([SublearnerSpec("gbdt_a")], X, y, k=5, fit=memorize)
    assert isinstance(oof, OOFMatrix)
    np.testing.assert_array_equal(oof.fold_of, np.repeat(np.arange(5), 20))
    assert oof.column_names == ("base_pred_gbdt_a",)


def test_memorizer_does_not_leak():
    rng = np.random.default_rng(1)
    X = matrix(rng.normal(size=(400, 3)))
    y = rng.normal(size=400)
    oof = generate_oof([SublearnerSpec("gbdt_a")], X, y, k=2, fit=memorize)
    in_fold = Memorizer(X, y).predict(X)
    assert np.mean((in_fold - y) ** 2) == 0.0
    oof_mse = np.mean((oof.predictions[:, 0] - y) ** 2)
    assert oof_mse == pytest.approx(2 * np.var(y), rel=0.25)


def test_constant_target_oof():
    X = matrix(np.random.default_rng(2).normal(size=(50, 2)))
    with pytest.warns(DegenerateTarget):
        oof = generate_oof([SublearnerSpec("gbdt_a")], X, np.full(50, 7.0), k=5)
    assert np.all(oof.predictions == 7.0)


def test_too_few_rows_for_folds():
    with pytest.raises(TooFewRows):
        generate_oof([SublearnerSpec("gbdt_a")], matrix(np.zeros((9, 1))), np.zeros(9), k=5)


def test_stack_width_and_groups():
    rng = np.random.default_rng(3)
    X = matrix(rng.normal(size=(60, 150)))
    y = rng.normal(size=60)
    specs = [SublearnerSpec(k) for k in ("gbdt_a", "gbdt_b", "mlp")]
    oof = OOFMatrix(rng.normal(size=(60, 3)), np.zeros(60, dtype=int), 5,
                    ("base_pred_gbdt_a", "base_pred_gbdt_b", "base_pred_mlp"))
    seen = []

    def record(Xs, ys, spec):
        seen.append(Xs)
        return Memorizer(Xs, ys)

    train_stack_layer(specs, X, oof, y, fit=record)
    assert all(m.n_cols == 153 for m in seen)
    assert seen[0].groups == ["raw", BASE_PRED_GROUP]


def test_perfect_base_column_fits_with_stumps():
    rng = np.random.default_rng(4)
    y = rng.choice([120.0, 250.0, 310.0, 480.0], size=200)
    X = matrix(rng.normal(size=(200, 4)))
    oof = OOFMatrix(y[:, None].copy(), np.zeros(200, dtype=int), 5, ("base_pred_gbdt_a",))
    spec = SublearnerSpec("gbdt_a", {"max_depth": 1, "learning_rate": 1.0, "n_rounds": 60,
                                     "subsample": 1.0, "early_stopping_patience": 0,
                                     "min_samples_leaf": 1})
    (model,) = train_stack_layer([spec], X, oof, y)
    Xs = X.hstack(["base_pred_gbdt_a"], y[:, None], BASE_PRED_GROUP)
    assert np.mean((model.predict(Xs) - y) ** 2) < 1e-6


def test_no_base_columns_warns():
    rng = np.random.default_rng(5)
    X, y = matrix(rng.normal(size=(30, 2))), rng.normal(size=30)
    empty = OOFMatrix(np.empty((30, 0)), np.zeros(30, dtype=int), 5, ())
    with pytest.warns(UserWarning, match="raw features only"):
        models = train_stack_layer([SublearnerSpec("gbdt_a")], X, empty, y, fit=memorize)
    assert models[0].X.shape == (30, 2)


def test_select_single_candidate():
    np.testing.assert_array_equal(ensemble_select(np.ones((5, 1)), np.ones(5)), [1.0])


def test_select_prefers_exact_candidate():
    rng = np.random.default_rng(6)
    y = rng.uniform(100, 200, 300)
    P = np.column_stack([y, y + rng.normal(0, 10, 300)])
    w = ensemble_select(P, y, iterations=50)
    assert w[0] >= 0.9


def test_select_identical_candidates_tie_to_lowest_index():
    y = np.array([10.0, 20.0, 30.0])
    P = np.column_stack([y * 1.1, y * 1.1])
    np.testing.assert_array_equal(ensemble_select(P, y), [1.0, 0.0])


def test_select_beats_best_single_and_weights_are_simplex():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n, m = int(rng.integers(20, 200)), int(rng.integers(2, 6))
        y = rng.uniform(50, 500, n)
        P = y[:, None] * (1 + rng.normal(0, 0.1, (n, m))) + rng.normal(0, 5, (n, m))
        w = ensemble_select(P, y, iterations=int(rng.integers(1, 60)))
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) <= 1e-12
        best_single = min(mape_direct(y, P[:, j]) for j in range(m))
        assert mape_direct(y, blend(P, w)) <= best_single + 1e-12


def test_select_trace_is_greedy_best():
    rng = np.random.default_rng(8)
    y = rng.uniform(50, 500, 100)
    P = y[:, None] + rng.normal(0, 20, (100, 4))
    w, trace = ensemble_select(P, y, iterations=30, return_trace=True)
    assert len(trace) == 30
    assert mape_direct(y, blend(P, w)) == pytest.approx(min(trace), rel=1e-12)


def test_select_errors():
    with pytest.raises(EmptyCandidates):
        ensemble_select(np.empty((3, 0)), np.ones(3))
    with pytest.raises(NonpositiveGroundtruth):
        ensemble_select(np.ones((3, 2)), np.array([1.0, 0.0, 2.0]))


def test_blend_one_hot_is_exact():
    P = np.random.default_rng(9).normal(size=(10, 3))
    np.testing.assert_array_equal(blend(P, np.array([0.0, 1.0, 0.0])), P[:, 1])


def hand_ensemble(constants, weights, columns=("a", "b")):
    return StackedHourEnsemble((), [constant_model(c, columns) for c in constants],
                               np.array(weights), 0, DAY1)


def test_ensemble_predict_weighted_constants():
    X = matrix(np.zeros((4, 2)), ("a", "b"))
    np.testing.assert_allclose(ensemble_predict(hand_ensemble([10, 20], [0.25, 0.75]), X), 17.5)
    same = ensemble_predict(hand_ensemble([3, 3, 3], [0.2, 0.3, 0.5]), X)
    np.testing.assert_allclose(same, 3.0, rtol=0, atol=1e-12)
    out = ensemble_predict(hand_ensemble([5, 6, 7], [1, 0, 0]), X)
    np.testing.assert_array_equal(out, np.full(4, 5.0))


def test_ensemble_rejects_bad_weights_and_columns():
    with pytest.raises(ValueError):
        hand_ensemble([1, 2], [0.5, 0.6])
    with pytest.raises(ValueError):
        hand_ensemble([1, 2], [-0.5, 1.5])
    with pytest.raises(ColumnMismatch):
        ensemble_predict(hand_ensemble([1], [1.0]), matrix(np.zeros((2, 2)), ("b", "a")))


@pytest.fixture(scope="module")
def fitted_hour():
    rng = np.random.default_rng(10)
    X = matrix(rng.normal(size=(150, 4)))
    y = 300 + 40 * X.values[:, 0] + rng.normal(0, 5, 150)
    specs = [SublearnerSpec("gbdt_a", {"n_rounds": 20}), SublearnerSpec("mlp", {"epochs": 3,
                                                                                 "hidden": [8, 4]})]
    return X, y, fit_hour_ensemble(X, y, specs, EnsembleSettings(), seed=3, target_hour=5,
                                   day_class=DAY1)


def test_fit_hour_ensemble(fitted_hour):
    X, y, e = fitted_hour
    assert e.target_hour == 5 and len(e.base_models) == 2 and len(e.stack_models) == 2
    assert e.base_columns == ("base_pred_gbdt_a", "base_pred_mlp")
    assert abs(e.weights.sum() - 1) <= 1e-12
    pred = ensemble_predict(e, X)
    assert mape_direct(y, pred) < 10


def test_ensemble_json_round_trip(fitted_hour):
    X, _, e = fitted_hour
    text = json.dumps(e.to_dict(), sort_keys=True)
    back = StackedHourEnsemble.from_dict(json.loads(text))
    np.testing.assert_array_equal(ensemble_predict(back, X), ensemble_predict(e, X))
    assert json.dumps(back.to_dict(), sort_keys=True) == text

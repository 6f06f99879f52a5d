import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from stf.ml import (AutoMLError, AutoMLSearch, BaselineModel, DatasetError, GaussianNB, KNNModel,
                    LinearRegression, LogisticRegression, ModelFormatError, ModelSpec,
                    Preprocessor, SchemaError, SingularSystemError, SplitMix64, automl_search,
                    evaluate, fit, kfold_cv, kfold_split, load_dataset, loads_model, make_windows,
                    preprocess, save_model)
from stf.ml.dataset import parse_csv
from stf.ml.estimators import FitError
from stf.ml.selection import fold_sizes

import oracles

# -- datasets ---------------------------------------------------------------------------


def test_load_numeric(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,y\n1,2\n3,4\n5,6\n")
    ds = load_dataset(p)
    assert len(ds) == 3
    assert [c.kind for c in ds.columns] == ["numeric", "numeric"]


def test_bad_cell_names_row_and_column():
    with pytest.raises(DatasetError) as e:
        parse_csv("x,y\n1,2\nabc,4\n", {"x": "numeric", "y": "numeric"})
    msg = str(e.value)
    # rows are counted from the first data row
    assert "column 'x'" in msg and "row 2" in msg


def test_timestamp_inferred():
    ds = parse_csv("t,v\n2024-01-01T00:00:00Z,1\n2024-01-02T06:00:00Z,2\n")
    assert ds.column("t").kind == "timestamp"


def test_ragged_rows_rejected():
    with pytest.raises(DatasetError):
        parse_csv("x,y\n1,2\n3\n")


def test_missing_cells_and_impute():
    ds = parse_csv("x,y\n1,10\n,20\n3,30\n")
    _, dropped = preprocess(ds, ["x"], ["y"])
    assert len(dropped) == 2
    _, filled = preprocess(ds, ["x"], ["y"], missing="mean_impute")
    assert filled.X[:, 0].tolist() == [1.0, 2.0, 3.0]


# -- preprocessing ------------------------------------------------------------------------


def test_minmax_example():
    _, d = preprocess(parse_csv("x,y\n0,1\n5,1\n10,1\n"), ["x"], ["y"], scaling="minmax")
    assert d.X[:, 0].tolist() == [0.0, 0.5, 1.0]


def test_zscore_example():
    # mean 3, population std 1
    _, d = preprocess(parse_csv("x,y\n2,0\n4,0\n"), ["x"], ["y"], scaling="zscore")
    assert d.X[:, 0].tolist() == [-1.0, 1.0]


def test_windows_example():
    X = np.array([[1.0], [2.0], [3.0], [4.0], [5.0]])
    Xw, Yw = make_windows(X, X, 2, 1)
    assert Xw.tolist() == [[1, 2], [2, 3], [3, 4]]
    assert Yw.tolist() == [[3], [4], [5]]


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 100), st.integers(1, 10), st.integers(1, 10))
def test_window_row_count(n, w, h):
    series = list(range(n))
    X = np.array(series, dtype=float).reshape(-1, 1)
    expected = oracles.lag_windows(series, w, h)
    if n - w - h + 1 < 1:
        with pytest.raises(ValueError):
            make_windows(X, X, w, h)
        return
    Xw, Yw = make_windows(X, X, w, h)
    assert Xw.shape[0] == n - w - h + 1 == len(expected)
    assert [(list(a), list(b)) for a, b in zip(Xw, Yw)] == expected


def test_timestamp_expansion():
    ds = parse_csv("t,y\n2024-01-01T05:00:00Z,1\n2024-01-03T23:00:00Z,2\n")
    _, d = preprocess(ds, ["t"], ["y"])
    # 2024-01-01 is a Monday
    assert d.X.tolist()[0][:2] == [5.0, 0.0]
    assert d.X.tolist()[1][:2] == [23.0, 2.0]
    assert d.X.tolist()[0][2] == 1704085200.0


def test_categorical_one_hot_and_unknown():
    ds = parse_csv("c,y\nred,1\nblue,2\nred,3\n")
    pre, d = preprocess(ds, ["c"], ["y"])
    assert d.X.tolist() == [[0, 1], [1, 0], [0, 1]]
    X, unknown = pre.transform_records([{"c": "green"}])
    assert X.tolist() == [[0, 0]] and unknown == 1


values = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=30)


@settings(max_examples=200, deadline=None)
@given(values, st.sampled_from(["minmax", "zscore"]))
def test_scaler_roundtrip(xs, kind):
    if max(xs) - min(xs) < 1e-3:
        return
    text = "x,y\n" + "".join(f"{v!r},0\n" for v in xs)
    pre, d = preprocess(parse_csv(text), ["x"], ["y"], scaling=kind)
    back = pre.inverse_scale(d.X)
    assert np.allclose(back[:, 0], xs, rtol=0, atol=1e-9 * max(1.0, max(map(abs, xs))))


# -- learners -------------------------------------------------------------------------


def test_ols_exact_line():
    X = np.array([[0.0], [1.0], [2.0]])
    y = np.array([1.0, 3.0, 5.0])
    m = LinearRegression(ridge=0.0).fit(X, y)
    assert abs(m.coef_[0][0] - 2.0) < 1e-9
    assert abs(m.intercept_[0] - 1.0) < 1e-9
    assert abs(m.predict([[3.0]])[0] - 7.0) < 1e-9


def test_ols_matches_lstsq_oracle():
    rng = SplitMix64(3)
    X = np.array([[rng.random() for _ in range(3)] for _ in range(20)])
    y = np.array([rng.random() for _ in range(20)])
    m = LinearRegression(ridge=0.0).fit(X, y)
    w, b = oracles.lstsq_fit(X, y)
    assert np.allclose(m.coef_[0], w, atol=1e-9) and abs(m.intercept_[0] - b) < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(4, 20), st.integers(1, 3))
def test_ols_optimality(seed, n, d):
    rng = SplitMix64(seed)
    X = np.array([[rng.normal() for _ in range(d)] for _ in range(n)])
    y = np.array([rng.normal() for _ in range(n)])
    try:
        m = LinearRegression(ridge=0.0).fit(X, y)
    except SingularSystemError:
        return
    base = float(np.sum((m.predict(X) - y) ** 2))
    params = np.r_[m.intercept_, m.coef_[0]]
    for j in range(d + 1):
        for delta in (-1e-3, 1e-3, -1e-1, 1e-1):
            p = params.copy()
            p[j] += delta
            sse = float(np.sum((p[0] + X @ p[1:] - y) ** 2))
            assert sse >= base - 1e-6


def test_singular_system_reported():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(SingularSystemError):
        LinearRegression(ridge=0.0).fit(X, [1.0, 2.0, 3.0])


def test_baseline_majority():
    m = BaselineModel().fit(np.zeros((3, 1)), np.array([0, 0, 1]))
    assert m.predict(np.array([[5.0], [-5.0]])).tolist() == [0, 0]


def test_logistic_separable():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0, 0, 1, 1])
    m = LogisticRegression().fit(X, y)
    assert m.predict(X).tolist() == [0, 0, 1, 1]


def test_logistic_rejects_single_class():
    with pytest.raises(FitError):
        LogisticRegression().fit(np.array([[1.0], [2.0]]), np.array([1, 1]))


def test_knn_memorizes():
    rng = SplitMix64(11)
    X = np.array([[rng.random(), rng.random()] for _ in range(50)])
    y = np.array([rng.below(3) for _ in range(50)])
    m = KNNModel(k=1).fit(X, y)
    assert (m.predict(X) == y).all()


def test_knn_tie_breaks_to_smallest_class():
    m = KNNModel(k=2).fit(np.array([[0.0], [2.0]]), np.array([1, 0]))
    assert m.predict(np.array([[1.0]])).tolist() == [0]


def test_nb_symmetric_midpoint():
    X = np.array([[-1.0], [-3.0], [1.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    p = GaussianNB().fit(X, y).predict_proba(np.array([[0.0]]))[0]
    assert abs(p[0] - 0.5) < 1e-9 and abs(p[1] - 0.5) < 1e-9


def test_nb_matches_density_oracle():
    X = np.array([[0.0], [1.0], [4.0], [6.0]])
    y = np.array([0, 0, 1, 1])
    m = GaussianNB().fit(X, y)
    q = 2.0
    l0 = 0.5 * oracles.gaussian_pdf(q, 0.5, 0.25)
    l1 = 0.5 * oracles.gaussian_pdf(q, 5.0, 1.0)
    p = m.predict_proba(np.array([[q]]))[0]
    assert abs(p[0] - l0 / (l0 + l1)) < 1e-9


def test_estimators_follow_sklearn_api():
    for est in (LinearRegression(ridge=0.5), LogisticRegression(iterations=10), KNNModel(k=3),
                GaussianNB(), BaselineModel(task="regression"), Preprocessor(["x"], ["y"])):
        twin = clone(est)
        assert twin.get_params() == est.get_params()


# -- metrics --------------------------------------------------------------------------


def test_metrics_fixture():
    preds, truth = [True, True, True, False], [True, False, True, False]
    r = evaluate(preds, truth, "classification")
    p, rc, f = oracles.prf(preds, truth, True)
    assert r.accuracy == 0.75
    assert r.precision[True] == pytest.approx(p, abs=1e-12) == pytest.approx(2 / 3)
    assert r.recall[True] == rc == 1.0
    assert r.f1[True] == pytest.approx(f) == pytest.approx(0.8)


def test_metrics_perfect():
    r = evaluate(["a", "b"], ["a", "b"], "classification")
    assert r.accuracy == 1.0 and all(v == 1.0 for v in r.f1.values())
    assert evaluate([1.0, 2.0], [1.0, 2.0], "regression").rmse == 0.0


def test_regression_metrics():
    r = evaluate([1, 2], [1, 4], "regression")
    assert r.rmse == pytest.approx(math.sqrt(2)) and r.mae == 1.0


def test_metrics_length_mismatch():
    with pytest.raises(ValueError):
        evaluate([1], [1, 2], "classification")


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40))
def test_metric_bounds(pairs):
    preds, truth = zip(*pairs)
    r = evaluate(preds, truth, "classification")
    assert 0 <= r.accuracy <= 1
    for d in (r.precision, r.recall, r.f1):
        assert all(0 <= v <= 1 for v in d.values())
    for i, c in enumerate(r.classes):
        assert sum(r.confusion[i]) == r.support[c]
    # micro-averaged recall equals accuracy
    tp = sum(r.confusion[i][i] for i in range(len(r.classes)))
    assert tp / len(pairs) == pytest.approx(r.accuracy)
    reg = evaluate([float(p) for p in preds], [float(t) for t in truth], "regression")
    assert reg.rmse >= reg.mae >= 0


# -- cross-validation and AutoML ---------------------------------------------------------


def test_fold_sizes():
    assert fold_sizes(10, 5) == [2, 2, 2, 2, 2] == oracles.fold_sizes(10, 5)
    assert fold_sizes(11, 5) == [3, 2, 2, 2, 2] == oracles.fold_sizes(11, 5)


def test_kfold_deterministic_partition():
    a = kfold_split(37, 5, seed=9)
    b = kfold_split(37, 5, seed=9)
    assert all((x == y).all() for x, y in zip(a, b))
    assert sorted(np.concatenate(a).tolist()) == list(range(37))
    assert [len(f) for f in a] == oracles.fold_sizes(37, 5)
    assert np.concatenate(kfold_split(10, 2, shuffle=False)).tolist() == list(range(10))


def test_kfold_too_few_rows():
    with pytest.raises(ValueError):
        kfold_split(3, 5)


def test_splitmix_reference_values():
    # first outputs of splitmix64 seeded with 0, from the published algorithm
    rng = SplitMix64(0)
    assert [rng.next_u64() for _ in range(3)] == [
        0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def line_data(n=30):
    text = "x,y\n" + "".join(f"{i},{2 * i + 1}\n" for i in range(n))
    return preprocess(parse_csv(text), ["x"], ["y"])


def test_automl_picks_linear_on_line():
    pre, data = line_data()
    best, board = automl_search(data, "regression", "rmse", 5, 24, seed=0)
    assert best.algorithm == "linear_regression"
    scores = {e["algorithm"]: e["score"] for e in reversed(board)}
    assert scores["linear_regression"] < 1e-6
    # the baseline's CV error is close to the spread of y
    assert scores["baseline"] > 10
    cv = kfold_cv(ModelSpec("baseline"), data, 5, 0, "rmse")
    assert cv.mean == pytest.approx(scores["baseline"])


def test_automl_degenerate_labels():
    _, data = preprocess(parse_csv("x,y\n1,a\n2,a\n3,a\n4,a\n5,a\n"), ["x"], ["y"])
    with pytest.raises(AutoMLError, match="degenerate labels"):
        automl_search(data, "classification", "accuracy", 2, 24)


def test_automl_budget_one():
    _, data = line_data()
    best, board = automl_search(data, "regression", "rmse", 5, 1)
    assert len(board) == 1 and best.algorithm == "baseline"


def test_automl_estimator_wrapper():
    _, data = line_data()
    search = AutoMLSearch(metric="rmse").fit(data)
    assert search.best_spec_.algorithm == "linear_regression"
    assert search.predict(np.array([[40.0]]))[0][0] == pytest.approx(81.0)


def test_sequential_cv_keeps_order():
    pre, data = line_data()
    data.sequential = True
    a = kfold_cv(ModelSpec("knn", {"k": 1}), data, 3, seed=1).per_fold
    b = kfold_cv(ModelSpec("knn", {"k": 1}), data, 3, seed=2).per_fold
    assert a == b


# -- trained model files -----------------------------------------------------------------


def classification_model():
    rng = SplitMix64(5)
    rows = "".join(f"{rng.random():.6f},{rng.below(10)},{'hi' if rng.random() > 0.5 else 'lo'}\n"
                   for _ in range(60))
    pre, data = preprocess(parse_csv("a,b,c\n" + rows), ["a", "b"], ["c"], scaling="zscore")
    return fit(ModelSpec("gaussian_nb"), data, 0, pre)


def test_save_load_roundtrip(tmp_path):
    model = classification_model()
    path = tmp_path / "m.json"
    save_model(model, path)
    again = loads_model(path.read_text())
    assert again.dumps() == model.dumps()
    rng = SplitMix64(8)
    for _ in range(100):
        rec = {"a": rng.random() * 2 - 0.5, "b": rng.below(12)}
        assert again.predict(rec) == model.predict(rec)


def test_fit_is_deterministic():
    assert classification_model().dumps() == classification_model().dumps()


def test_unknown_algorithm_id():
    doc = json.loads(classification_model().dumps())
    doc["algorithm"] = "deep_forest"
    with pytest.raises(ModelFormatError, match="deep_forest"):
        loads_model(json.dumps(doc))


def test_version_and_schema_checks():
    doc = json.loads(classification_model().dumps())
    with pytest.raises(ModelFormatError):
        loads_model(json.dumps(dict(doc, format_version=99)))
    del doc["schema"]
    with pytest.raises(ModelFormatError):
        loads_model(json.dumps(doc))


def test_hand_written_linear_model():
    doc = {
        "format_version": 1, "algorithm": "linear_regression", "task": "regression",
        "schema": {"features": [{"name": "x", "type": "numeric"}],
                   "labels": [{"name": "y", "type": "numeric"}]},
        "scaler": {"kind": "none", "columns": []}, "encoder": {},
        "parameters": {"weights": [2.0], "intercept": 1.0}, "trained_on": 0,
    }
    out, _ = loads_model(json.dumps(doc)).predict({"x": 3})
    assert abs(out["y"] - 7.0) < 1e-9


def test_schema_mismatch_on_predict():
    model = classification_model()
    with pytest.raises(SchemaError):
        model.predict({"a": 1.0})
    with pytest.raises(SchemaError):
        model.predict({"a": "text", "b": 1})

"""Model specs, trained models and the on-disk model file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from stf.ml.dataset import CATEGORICAL, NUMERIC, TIMESTAMP
from stf.ml.estimators import BaselineModel, FitError, GaussianNB, KNNModel, LinearRegression, \
    LogisticRegression
from stf.ml.preprocessing import CLASSIFICATION, REGRESSION, PreparedData, Preprocessor, \
    PreprocessError

FORMAT_VERSION = 1

ALGORITHMS = ("baseline", "linear_regression", "logistic_regression", "knn", "gaussian_nb")

TASKS_OF = {
    "baseline": (CLASSIFICATION, REGRESSION),
    "linear_regression": (REGRESSION,),
    "logistic_regression": (CLASSIFICATION,),
    "knn": (CLASSIFICATION, REGRESSION),
    "gaussian_nb": (CLASSIFICATION,),
}

# name -> (python type, default, lower bound)
HYPERPARAMS = {
    "baseline": {},
    "linear_regression": {"ridge": (float, 1e-8, 0.0)},
    "logistic_regression": {"learning_rate": (float, 0.1, 0.0), "iterations": (int, 500, 1)},
    "knn": {"k": (int, 5, 1)},
    "gaussian_nb": {},
}

METRICS = {CLASSIFICATION: ("accuracy", "macro_f1"), REGRESSION: ("rmse",)}


class ModelFormatError(ValueError):
    pass


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    algorithm: str
    hyperparams: dict = field(default_factory=dict, hash=False)

    def resolved(self) -> dict:
        """Hyperparameters with defaults filled in and types normalized."""
        problems = spec_problems(self.algorithm, self.hyperparams)
        if problems:
            raise FitError("; ".join(problems))
        out = {}
        for name, (typ, default, _) in HYPERPARAMS[self.algorithm].items():
            out[name] = typ(self.hyperparams.get(name, default))
        return out

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "hyperparams": self.resolved()}


def spec_problems(algorithm: str, hyperparams: dict, task: Optional[str] = None) -> list[str]:
    """Everything wrong with an algorithm choice; empty when it is usable."""
    if algorithm not in HYPERPARAMS:
        return [f"unknown algorithm '{algorithm}' (known: {', '.join(ALGORITHMS)})"]
    problems = []
    if task is not None and task not in TASKS_OF[algorithm]:
        problems.append(f"{algorithm} is not a {task} algorithm")
    allowed = HYPERPARAMS[algorithm]
    for name, value in hyperparams.items():
        if name not in allowed:
            problems.append(f"{algorithm} has no hyperparameter '{name}'")
            continue
        typ, _, low = allowed[name]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"hyperparameter '{name}' must be numeric")
        elif typ is int and not float(value).is_integer():
            problems.append(f"hyperparameter '{name}' must be an integer")
        elif value < low or (name == "learning_rate" and value <= 0):
            problems.append(f"hyperparameter '{name}' is out of range")
    return problems


def build_estimator(spec: ModelSpec, task: str):
    hp = spec.resolved()
    if task not in TASKS_OF[spec.algorithm]:
        raise FitError(f"{spec.algorithm} cannot be used for {task}")
    if spec.algorithm == "baseline":
        return BaselineModel(task=task)
    if spec.algorithm == "linear_regression":
        return LinearRegression(ridge=hp["ridge"])
    if spec.algorithm == "logistic_regression":
        return LogisticRegression(learning_rate=hp["learning_rate"], iterations=hp["iterations"])
    if spec.algorithm == "knn":
        return KNNModel(k=hp["k"], task=task)
    return GaussianNB()


def fit_estimators(spec: ModelSpec, X: np.ndarray, Y: np.ndarray, task: str) -> list:
    """One estimator per output column for classification, one overall for regression."""
    if X.shape[0] == 0:
        raise FitError("cannot fit on an empty dataset")
    if task == CLASSIFICATION:
        return [build_estimator(spec, task).fit(X, Y[:, j]) for j in range(Y.shape[1])]
    y = Y[:, 0] if Y.shape[1] == 1 else Y
    return [build_estimator(spec, task).fit(X, y)]


def predict_matrix(estimators: list, X: np.ndarray, task: str) -> np.ndarray:
    if task == CLASSIFICATION:
        return np.column_stack([e.predict(X) for e in estimators])
    out = np.asarray(estimators[0].predict(X), dtype=float)
    return out.reshape(X.shape[0], -1)


@dataclass
class TrainedModel:
    spec: ModelSpec
    task: str
    preprocessor: Preprocessor
    estimators: list
    output_names: list[str]
    trained_on: int

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.preprocessor.feature_columns_]

    @property
    def label_names(self) -> list[str]:
        return [c.name for c in self.preprocessor.label_columns_]

    @property
    def window(self) -> Optional[tuple[int, int]]:
        return tuple(self.preprocessor.window) if self.preprocessor.window else None

    def _check_record(self, rec: dict) -> None:
        names = set(self.feature_names)
        got = set(rec)
        if got != names:
            missing = sorted(names - got)
            extra = sorted(got - names)
            raise SchemaError(f"record does not match model schema (missing {missing}, "
                              f"unexpected {extra})")
        for c in self.preprocessor.feature_columns_:
            v = rec[c.name]
            if v is None:
                continue
            if c.kind == CATEGORICAL and not isinstance(v, str):
                raise SchemaError(f"feature '{c.name}' expects a category, got {v!r}")
            if c.kind in (NUMERIC, TIMESTAMP) and (isinstance(v, (str, bool))):
                raise SchemaError(f"feature '{c.name}' expects a number, got {v!r}")

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        return predict_matrix(self.estimators, X, self.task)

    def predict(self, records: Union[dict, Sequence[dict]]):
        """Predict from raw feature values.

        ``records`` is one record (a mapping of feature name to raw value) or,
        for windowed models, the recent history of records, oldest first.
        Returns ``(outputs, probabilities)``: decoded values keyed by output
        name, and per-output class probabilities (``None`` for regression).
        """
        recs = [records] if isinstance(records, dict) else list(records)
        for r in recs:
            self._check_record(r)
        try:
            X, _ = self.preprocessor.transform_records(recs)
        except PreprocessError as e:
            raise SchemaError(str(e)) from None
        if not self.window and X.shape[0] != 1:
            X = X[-1:]
        raw = self.predict_matrix(X)[0]
        outputs = {name: self.preprocessor.decode(j, raw[j])
                   for j, name in enumerate(self.output_names)}
        probs = None
        if self.task == CLASSIFICATION:
            probs = {}
            for j, name in enumerate(self.output_names):
                est = self.estimators[j]
                p = est.predict_proba(X)[0]
                label = self.label_names[j // self.preprocessor.horizon]
                cats = self.preprocessor.classes_[label]
                full = [0.0] * len(cats)
                for code, pj in zip(est.classes_, p):
                    full[int(code)] = float(pj)
                probs[name] = full
        return outputs, probs

    # -- serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        state = self.preprocessor.get_state()
        if self.task == CLASSIFICATION:
            params = {"outputs": [e.get_state() for e in self.estimators]}
        else:
            params = self.estimators[0].get_state()
        return {
            "format_version": FORMAT_VERSION,
            "algorithm": self.spec.algorithm,
            "hyperparams": self.spec.resolved(),
            "task": self.task,
            "schema": {"features": state["features"], "labels": state["labels"]},
            "scaler": {"kind": state["scaling"], "columns": state["scaler"]},
            "encoder": state["encoder"],
            "classes": state["classes"],
            "preprocess": {"missing": state["missing"], "impute": state["impute"],
                           "window": state["window"], "sequential": state["sequential"]},
            "outputs": list(self.output_names),
            "parameters": params,
            "trained_on": self.trained_on,
        }

    def dumps(self) -> str:
        return dumps_model_dict(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainedModel":
        if not isinstance(doc, dict):
            raise ModelFormatError("model file must hold a JSON object")
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise ModelFormatError(
                f"unsupported model format_version {version!r} (expected {FORMAT_VERSION})")
        algorithm = doc.get("algorithm")
        if algorithm not in HYPERPARAMS:
            raise ModelFormatError(f"unknown algorithm id '{algorithm}'")
        schema = doc.get("schema")
        if not isinstance(schema, dict) or "features" not in schema:
            raise ModelFormatError("model file has no schema block")

        def columns(items):
            out = []
            for it in items:
                if isinstance(it, str):
                    out.append({"name": it, "type": NUMERIC})
                else:
                    out.append({"name": it["name"], "type": it.get("type", NUMERIC)})
            return out

        features = columns(schema["features"])
        labels = columns(schema.get("labels", []))
        classes = doc.get("classes") or {}
        task = doc.get("task") or (CLASSIFICATION if classes else REGRESSION)
        if task not in TASKS_OF[algorithm]:
            raise ModelFormatError(f"{algorithm} cannot be a {task} model")
        pre = doc.get("preprocess") or {}
        scaler = doc.get("scaler") or {}
        try:
            preprocessor = Preprocessor.from_state({
                "features": features, "labels": labels,
                "scaling": scaler.get("kind", "none"), "scaler": scaler.get("columns"),
                "encoder": doc.get("encoder") or {}, "classes": classes, "task": task,
                "missing": pre.get("missing", "drop"), "impute": pre.get("impute") or {},
                "window": pre.get("window"), "sequential": pre.get("sequential", False),
            })
        except (KeyError, ValueError, TypeError) as e:
            raise ModelFormatError(f"invalid preprocessing state: {e}") from None
        horizon = preprocessor.horizon
        outputs = doc.get("outputs") or (
            [f"{c['name']}@t+{k}" for c in labels for k in range(horizon)]
            if preprocessor.window else [c["name"] for c in labels])
        spec = ModelSpec(algorithm, dict(doc.get("hyperparams") or {}))
        hp = spec.resolved()
        params = doc.get("parameters")
        if not isinstance(params, dict):
            raise ModelFormatError("model file has no parameters block")
        cls_map = {"baseline": BaselineModel, "linear_regression": LinearRegression,
                   "logistic_regression": LogisticRegression, "knn": KNNModel,
                   "gaussian_nb": GaussianNB}
        est_cls = cls_map[algorithm]
        ctor = dict(hp)
        if algorithm in ("baseline", "knn"):
            ctor["task"] = task
        try:
            if task == CLASSIFICATION:
                estimators = [est_cls.from_state(ctor, s) for s in params["outputs"]]
            else:
                estimators = [est_cls.from_state(ctor, params)]
        except (KeyError, ValueError, TypeError) as e:
            raise ModelFormatError(f"invalid {algorithm} parameters: {e}") from None
        n_expanded = len(preprocessor.expanded_names_) * (preprocessor.window[0]
                                                           if preprocessor.window else 1)
        for est in estimators:
            if getattr(est, "n_features_in_", n_expanded) not in (0, n_expanded):
                raise ModelFormatError(
                    f"parameters expect {est.n_features_in_} inputs, schema gives {n_expanded}")
        return cls(spec, task, preprocessor, estimators, list(outputs),
                   int(doc.get("trained_on", 0)))


def dumps_model_dict(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def fit(spec: ModelSpec, data: PreparedData, seed: int = 0,
        preprocessor: Optional[Preprocessor] = None) -> TrainedModel:
    """Train ``spec`` on prepared data.

    ``seed`` is accepted for interface symmetry; every built-in learner is
    deterministic.  ``preprocessor`` supplies the raw schema; without one the
    model treats the prepared columns as its numeric raw features.
    """
    del seed
    if len(data) == 0:
        raise FitError("cannot fit on an empty dataset")
    if spec.algorithm not in TASKS_OF:
        raise FitError(f"unknown algorithm '{spec.algorithm}'")
    if preprocessor is None:
        preprocessor = Preprocessor.from_state({
            "features": [{"name": n, "type": NUMERIC} for n in data.feature_names],
            "labels": [{"name": n, "type": NUMERIC if data.task == REGRESSION else CATEGORICAL}
                       for n in data.output_names],
            "classes": ({n: list(c) for n, c in zip(data.output_names, data.classes)}
                        if data.classes else {}),
            "task": data.task,
        })
    estimators = fit_estimators(spec, data.X, data.Y, data.task)
    return TrainedModel(spec, data.task, preprocessor, estimators, list(data.output_names),
                        len(data))


def predict(model: TrainedModel, record):
    return model.predict(record)


def save_model(model: TrainedModel, path: Union[str, Path]) -> None:
    Path(path).write_text(model.dumps(), encoding="utf-8")


def loads_model(text: str) -> TrainedModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"model file is not valid JSON: {e}") from None
    return TrainedModel.from_dict(doc)


def load_model(path: Union[str, Path]) -> TrainedModel:
    path = Path(path)
    if not path.is_file():
        raise ModelFormatError(f"model file not found: {path}")
    return loads_model(path.read_text(encoding="utf-8"))

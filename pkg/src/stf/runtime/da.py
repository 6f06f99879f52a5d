"""Bindings from the ``da_*`` actions to the ML engine.

A DA config is a plain dict so that the interpreter (built from the AST) and
compiled bundles (read from JSON) drive exactly the same code.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from stf.ml.dataset import (CATEGORICAL, KIND_OF_TYPE, Column, Dataset, DatasetError,
                            append_csv_row, format_cell, format_timestamp, load_dataset)
from stf.ml.estimators import FitError
from stf.ml.metrics import evaluate
from stf.ml.models import (METRICS, ModelFormatError, ModelSpec, SchemaError, TrainedModel, fit,
                           load_model)
from stf.ml.preprocessing import CLASSIFICATION, PreprocessError, Preprocessor
from stf.ml.selection import DEFAULT_BUDGET, DEFAULT_FOLDS, AutoMLError, automl_search
from stf.model import AutoMLMode, ExpertMode, Thing


class DAError(Exception):
    """A DA action failed; traced as an error, the instance keeps running."""


class InstantiationError(Exception):
    pass


def da_config(thing: Thing) -> Optional[dict]:
    da = thing.da
    if da is None:
        return None
    types = {p.name: p.type for p in thing.properties}
    if isinstance(da.mode, ExpertMode):
        mode = {"kind": "expert", "algorithm": da.mode.algorithm,
                "hyperparams": da.mode.hyperparam_dict()}
    else:
        assert isinstance(da.mode, AutoMLMode)
        mode = {"kind": "automl", "metric": da.mode.metric, "folds": da.mode.folds,
                "budget": da.mode.budget}
    return {
        "dataset": da.dataset,
        "features": list(da.features),
        "labels": list(da.labels),
        "types": {n: types[n] for n in list(da.features) + list(da.labels) if n in types},
        "sequential": da.is_sequential,
        "window": list(da.window) if da.window else None,
        "scaling": da.scaling_kind,
        "missing": da.missing_policy,
        "mode": mode,
        "pretrained": da.pretrained,
        "backend": thing.backend,
    }


def _cell(value, typ: str):
    """Property value -> dataset cell."""
    if typ == "Bool":
        return "true" if value else "false"
    if typ in ("Int", "Float"):
        return float(value)
    return value


def _record_value(value, typ: str):
    """Property value -> raw prediction input."""
    if typ == "Bool":
        return "true" if value else "false"
    return value


def _label_value(value, typ: str):
    """Decoded model output -> property value."""
    if typ == "Bool":
        return value == "true" if isinstance(value, str) else bool(value)
    if typ == "String":
        return str(value)
    if typ in ("Int", "Timestamp"):
        return int(np.floor(float(value) + 0.5))
    return float(value)


class DAContext:
    """Per-instance DA state: dataset buffer, prepared data, trained model."""

    def __init__(self, config: dict, data_root: Path, seed: int,
                 pretrained_doc: Optional[dict] = None, persist: bool = False):
        self.config = config
        self.seed = seed
        self.persist = persist
        self.types = config["types"]
        self.features = list(config["features"])
        self.labels = list(config["labels"])
        self.window = tuple(config["window"]) if config.get("window") else None
        self.path = Path(config["dataset"])
        if not self.path.is_absolute():
            self.path = data_root / self.path
        schema = {n: KIND_OF_TYPE[t] for n, t in self.types.items()}
        self.model: Optional[TrainedModel] = None
        self.prepared = None
        self.preprocessor = None
        if config.get("pretrained"):
            try:
                if pretrained_doc is not None:
                    self.model = TrainedModel.from_dict(pretrained_doc)
                else:
                    p = Path(config["pretrained"])
                    self.model = load_model(p if p.is_absolute() else data_root / p)
            except ModelFormatError as e:
                raise InstantiationError(f"pretrained model '{config['pretrained']}': {e}") \
                    from None
        if self.path.is_file():
            try:
                self.snapshot = load_dataset(self.path, schema)
            except DatasetError as e:
                raise InstantiationError(f"dataset '{config['dataset']}': {e}") from None
            for n in self.features + self.labels:
                if n not in self.snapshot.names:
                    raise InstantiationError(f"dataset '{config['dataset']}' has no column '{n}'")
        elif self.model is not None:
            names = list(dict.fromkeys(self.features + self.labels))
            self.snapshot = Dataset([Column(n, schema[n]) for n in names], [])
        else:
            raise InstantiationError(f"dataset file not found: {config['dataset']}")
        self.buffer: list[tuple] = []
        self.history: list[dict] = []
        if self.window:
            self._seed_history()

    @property
    def ready(self) -> bool:
        return self.model is not None

    def _seed_history(self) -> None:
        # a windowed predictor starts from the most recent complete dataset rows
        idx = [self.snapshot.index(n) for n in self.features]
        rows = [r for r in self.snapshot.rows if all(r[i] is not None for i in idx)]
        for r in rows[-self.window[0]:]:
            self.history.append({n: self._from_cell(r[i], n) for n, i in zip(self.features, idx)})

    def _from_cell(self, v, name: str):
        if self.types.get(name) == "Int" and isinstance(v, float) and v.is_integer():
            return int(v)
        return v

    def dataset(self) -> Dataset:
        return self.snapshot.extend(self.buffer) if self.buffer else self.snapshot

    # -- actions -----------------------------------------------------------------

    def save(self, props: dict) -> dict:
        row = []
        saved = {}
        for col in self.snapshot.columns:
            if col.name in self.types:
                v = props[col.name]
                saved[col.name] = v
                row.append(_cell(v, self.types[col.name]))
            else:
                row.append(None)
        self.buffer.append(tuple(row))
        if self.persist:
            append_csv_row(self.path, [self._file_cell(v, c) for v, c in
                                       zip(row, self.snapshot.columns)])
        return {"row": saved, "rows": len(self.snapshot) + len(self.buffer)}

    @staticmethod
    def _file_cell(v, col: Column) -> str:
        if v is not None and col.kind == "timestamp":
            return format_timestamp(v)
        return format_cell(v)

    def preprocess(self) -> dict:
        cfg = self.config
        pre = Preprocessor(self.features, self.labels, scaling=cfg["scaling"],
                           missing=cfg["missing"], window=self.window,
                           sequential=cfg["sequential"])
        ds = self.dataset()
        try:
            pre.fit(ds)
            data = pre.transform(ds)
        except (PreprocessError, DatasetError) as e:
            raise DAError(f"preprocessing failed: {e}") from None
        self.preprocessor, self.prepared = pre, data
        return {"rows": len(data), "features": len(data.feature_names),
                "outputs": list(data.output_names), "task": data.task}

    def train(self) -> dict:
        if self.prepared is None:
            raise DAError("no prepared data (run da_preprocess first)")
        data = self.prepared
        mode = self.config["mode"]
        report: dict = {"mode": mode["kind"], "rows": len(data), "task": data.task}
        try:
            if mode["kind"] == "expert":
                spec = ModelSpec(mode["algorithm"], dict(mode["hyperparams"]))
            else:
                metric = mode.get("metric") or METRICS[data.task][0]
                folds = mode.get("folds") or DEFAULT_FOLDS
                budget = mode.get("budget") or DEFAULT_BUDGET
                spec, board = automl_search(data, data.task, metric, folds, budget, self.seed)
                report.update(metric=metric, folds=folds, cv_score=board[0]["score"],
                              candidates=len(board))
            model = fit(spec, data, self.seed, self.preprocessor)
        except (FitError, AutoMLError, ValueError) as e:
            raise DAError(f"training failed: {e}") from None
        self.model = model
        report.update(algorithm=spec.algorithm, hyperparams=spec.resolved(),
                      train_metrics=self._train_metrics(model, data))
        return report

    @staticmethod
    def _train_metrics(model: TrainedModel, data) -> dict:
        pred = model.predict_matrix(data.X)
        if data.task == CLASSIFICATION:
            out = {}
            for j, name in enumerate(data.output_names):
                rep = evaluate(pred[:, j].tolist(), data.Y[:, j].tolist(), data.task)
                out[name] = {"accuracy": rep.accuracy, "macro_f1": rep.macro_f1}
            return out
        rep = evaluate(pred.ravel(), data.Y.ravel(), data.task)
        return {"rmse": rep.rmse, "mae": rep.mae}

    def predict(self, props: dict) -> tuple[dict, dict]:
        """Returns ``(inputs, assignments)``; assignments map label -> new value."""
        if self.model is None:
            raise DAError("model not ready (no da_train and no pretrained model)")
        model = self.model
        record = {n: _record_value(props[n], self.types.get(n, "Float"))
                  for n in model.feature_names}
        inputs = {n: props[n] for n in model.feature_names}
        try:
            if model.window:
                self.history.append(record)
                lag = model.window[0]
                del self.history[:-lag]
                if len(self.history) < lag:
                    raise DAError(f"insufficient history ({len(self.history)} of {lag} "
                                  "records)")
                outputs, _ = model.predict(list(self.history))
            else:
                outputs, _ = model.predict(record)
        except (SchemaError, PreprocessError) as e:
            raise DAError(f"prediction failed: {e}") from None
        assigned = {}
        for label in model.label_names:
            key = label if not model.window else f"{label}@t+0"
            if key in outputs and label in self.types:
                assigned[label] = _label_value(outputs[key], self.types[label])
        return inputs, {"outputs": {k: _json_value(v) for k, v in outputs.items()},
                        "assign": assigned}


def _json_value(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v

"""Turning a raw :class:`Dataset` into numeric matrices.

The pipeline, in order: missing-value policy, feature expansion (one-hot for
categorical columns, three derived columns for timestamps), per-column
scaling, label encoding and, for sequential blocks, sliding windows.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from stf.ml.dataset import CATEGORICAL, NUMERIC, TIMESTAMP, Column, Dataset, DatasetError

SCALING_KINDS = ("none", "minmax", "zscore")
MISSING_POLICIES = ("drop", "mean_impute")

CLASSIFICATION, REGRESSION = "classification", "regression"


class PreprocessError(ValueError):
    pass


@dataclass
class PreparedData:
    X: np.ndarray
    Y: np.ndarray
    feature_names: list[str]
    output_names: list[str]
    task: str
    classes: Optional[list[list[str]]] = None
    scaler_state: list[dict] = field(default_factory=list)
    encoder_state: dict[str, list[str]] = field(default_factory=dict)
    window: Optional[tuple[int, int]] = None
    sequential: bool = False
    unknown_categories: int = 0

    def __len__(self) -> int:
        return self.X.shape[0]

    def take(self, indices) -> "PreparedData":
        idx = np.asarray(indices, dtype=int)
        return replace(self, X=self.X[idx], Y=self.Y[idx])


def timestamp_parts(epoch: int) -> tuple[float, float, float]:
    """``(hour_of_day, day_of_week, epoch_seconds)``; Monday is day 0, UTC."""
    dt = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    return float(dt.hour), float(dt.weekday()), float(epoch)


def make_windows(X: np.ndarray, Y: np.ndarray, lag: int, horizon: int):
    """Sliding windows over time-ordered rows.

    Row ``i`` of the result holds features from rows ``i .. i+lag-1`` (oldest
    first, flattened lag-major) and targets from rows ``i+lag .. i+lag+horizon-1``
    (flattened label-major).  A series of length n yields ``n - lag - horizon + 1``
    rows.
    """
    n = X.shape[0]
    count = n - lag - horizon + 1
    if lag < 1 or horizon < 1:
        raise PreprocessError("window lag and horizon must be positive")
    if count < 1:
        raise PreprocessError(
            f"series of length {n} is too short for window {lag} and horizon {horizon}")
    Xw = np.stack([X[i:i + lag].reshape(-1) for i in range(count)])
    Yw = np.stack([Y[i + lag:i + lag + horizon].T.reshape(-1) for i in range(count)])
    return Xw, Yw


class Preprocessor(TransformerMixin, BaseEstimator):
    """Fit-once, transform-many preprocessing for a DA block.

    Parameters
    ----------
    features, labels : sequence of str
        Dataset column names.
    scaling : {"none", "minmax", "zscore"}
        Applied to every expanded feature column. ``zscore`` uses the
        population standard deviation; constant columns get a unit scale.
    missing : {"drop", "mean_impute"}
        ``mean_impute`` fills numeric and timestamp cells with the column mean
        and categorical cells with the most frequent category.
    window : (lag, horizon) or None
        Turn time-ordered rows into sliding windows.
    sequential : bool
        Recorded on the prepared data; sequential data is never shuffled.
    """

    def __init__(self, features: Sequence[str] = (), labels: Sequence[str] = (),
                 scaling: str = "none", missing: str = "drop", window=None,
                 sequential: bool = False):
        self.features = features
        self.labels = labels
        self.scaling = scaling
        self.missing = missing
        self.window = window
        self.sequential = sequential

    # -- fitting ------------------------------------------------------------------

    def fit(self, dataset: Dataset, y=None):
        if self.scaling not in SCALING_KINDS:
            raise PreprocessError(f"unknown scaling '{self.scaling}'")
        if self.missing not in MISSING_POLICIES:
            raise PreprocessError(f"unknown missing policy '{self.missing}'")
        if not self.features:
            raise PreprocessError("at least one feature is required")
        self.feature_columns_ = [dataset.column(n) for n in self.features]
        self.label_columns_ = [dataset.column(n) for n in self.labels]
        selected = self.feature_columns_ + self.label_columns_

        self.impute_ = {}
        if self.missing == "mean_impute":
            for col in selected:
                self.impute_[col.name] = _fill_value(dataset.values(col.name), col.kind)
        rows = self._complete_rows(dataset, selected)
        if not rows:
            raise PreprocessError("dataset is empty after applying the missing-value policy")

        self.encoder_ = {}
        for col in self.feature_columns_:
            if col.kind == CATEGORICAL:
                idx = dataset.index(col.name)
                self.encoder_[col.name] = sorted({r[idx] for r in rows})

        label_kinds = {c.kind == CATEGORICAL for c in self.label_columns_}
        if len(label_kinds) > 1:
            raise PreprocessError("labels mix categorical and numeric columns")
        self.task_ = CLASSIFICATION if label_kinds == {True} else REGRESSION
        self.classes_ = {}
        if self.task_ == CLASSIFICATION:
            for col in self.label_columns_:
                idx = dataset.index(col.name)
                self.classes_[col.name] = sorted({r[idx] for r in rows})

        self.expanded_names_ = self._expanded_names()
        raw = self._expand(dataset, rows)
        self.scaler_ = [_scaler_entry(self.scaling, name, raw[:, j])
                        for j, name in enumerate(self.expanded_names_)]
        return self

    def _complete_rows(self, dataset: Dataset, selected: list[Column]) -> list[tuple]:
        idx = [dataset.index(c.name) for c in selected]
        if self.missing == "drop":
            return [r for r in dataset.rows if all(r[i] is not None for i in idx)]
        out = []
        for r in dataset.rows:
            r = list(r)
            for c, i in zip(selected, idx):
                if r[i] is None:
                    r[i] = self.impute_[c.name]
            out.append(tuple(r))
        return out

    def _expanded_names(self) -> list[str]:
        names = []
        for col in self.feature_columns_:
            if col.kind == CATEGORICAL:
                names.extend(f"{col.name}={c}" for c in self.encoder_[col.name])
            elif col.kind == TIMESTAMP:
                names.extend(f"{col.name}.{p}" for p in ("hour_of_day", "day_of_week", "epoch"))
            else:
                names.append(col.name)
        return names

    def _expand_value(self, col: Column, v, counter: list[int]) -> list[float]:
        if col.kind == CATEGORICAL:
            cats = self.encoder_[col.name]
            vec = [0.0] * len(cats)
            if v in cats:
                vec[cats.index(v)] = 1.0
            else:
                counter[0] += 1
            return vec
        if col.kind == TIMESTAMP:
            return list(timestamp_parts(v))
        if isinstance(v, str):
            raise PreprocessError(f"column '{col.name}' expects a number, got {v!r}")
        return [float(v)]

    def _expand(self, dataset: Dataset, rows, counter=None) -> np.ndarray:
        counter = counter if counter is not None else [0]
        idx = [dataset.index(c.name) for c in self.feature_columns_]
        out = []
        for r in rows:
            vec: list[float] = []
            for col, i in zip(self.feature_columns_, idx):
                vec.extend(self._expand_value(col, r[i], counter))
            out.append(vec)
        return np.asarray(out, dtype=float).reshape(len(out), len(self.expanded_names_))

    # -- transforming -------------------------------------------------------------

    def scale(self, raw: np.ndarray) -> np.ndarray:
        shift = np.array([s["shift"] for s in self.scaler_], dtype=float)
        scale = np.array([s["scale"] for s in self.scaler_], dtype=float)
        return (raw - shift) / scale

    def inverse_scale(self, scaled: np.ndarray) -> np.ndarray:
        shift = np.array([s["shift"] for s in self.scaler_], dtype=float)
        scale = np.array([s["scale"] for s in self.scaler_], dtype=float)
        return scaled * scale + shift

    def transform(self, dataset: Dataset) -> PreparedData:
        check_is_fitted(self, "scaler_")
        for c in self.feature_columns_ + self.label_columns_:
            if dataset.column(c.name).kind != c.kind:
                raise PreprocessError(f"column '{c.name}' changed type since fitting")
        selected = self.feature_columns_ + self.label_columns_
        rows = self._complete_rows(dataset, selected)
        if not rows:
            raise PreprocessError("dataset is empty after applying the missing-value policy")
        counter = [0]
        X = self.scale(self._expand(dataset, rows, counter))
        Y = self._encode_labels(dataset, rows)
        feature_names = list(self.expanded_names_)
        output_names = list(self.labels)
        classes = [list(self.classes_[n]) for n in self.labels] if self.classes_ else None
        if self.window:
            lag, horizon = self.window
            X, Y = make_windows(X, Y, lag, horizon)
            feature_names = [f"{n}@t-{lag - k}" for k in range(lag) for n in self.expanded_names_]
            output_names = [f"{n}@t+{k}" for n in self.labels for k in range(horizon)]
            if classes is not None:
                classes = [list(self.classes_[n]) for n in self.labels for _ in range(horizon)]
        return PreparedData(
            X=X, Y=Y, feature_names=feature_names, output_names=output_names,
            task=self.task_, classes=classes, scaler_state=self.scaler_state(),
            encoder_state={k: list(v) for k, v in self.encoder_.items()},
            window=tuple(self.window) if self.window else None,
            sequential=bool(self.sequential or self.window), unknown_categories=counter[0])

    def _encode_labels(self, dataset: Dataset, rows) -> np.ndarray:
        idx = [dataset.index(c.name) for c in self.label_columns_]
        if self.task_ == CLASSIFICATION:
            out = []
            for r in rows:
                codes = []
                for c, i in zip(self.label_columns_, idx):
                    try:
                        codes.append(self.classes_[c.name].index(r[i]))
                    except ValueError:
                        raise PreprocessError(
                            f"label '{c.name}' has class {r[i]!r} unseen during fitting") from None
                out.append(codes)
            return np.asarray(out, dtype=int).reshape(len(rows), len(idx))
        return np.asarray([[float(r[i]) for i in idx] for r in rows],
                          dtype=float).reshape(len(rows), len(idx))

    def transform_records(self, records: Sequence[dict]) -> tuple[np.ndarray, int]:
        """Features for prediction from raw records keyed by column name.

        Without a window each record gives one row.  With a window the records
        are one history (oldest first) and the most recent ``lag`` of them
        form a single row.  Returns the matrix and the unknown-category count.
        """
        check_is_fitted(self, "scaler_")
        counter = [0]
        rows = []
        for rec in records:
            vec: list[float] = []
            for col in self.feature_columns_:
                if col.name not in rec:
                    raise PreprocessError(f"record lacks feature '{col.name}'")
                v = rec[col.name]
                if v is None:
                    if col.name not in self.impute_:
                        raise PreprocessError(f"feature '{col.name}' is missing")
                    v = self.impute_[col.name]
                vec.extend(self._expand_value(col, v, counter))
            rows.append(vec)
        X = self.scale(np.asarray(rows, dtype=float).reshape(len(rows), len(self.expanded_names_)))
        if self.window:
            lag = self.window[0]
            if X.shape[0] < lag:
                raise PreprocessError(f"need {lag} past records, got {X.shape[0]}")
            X = X[-lag:].reshape(1, -1)
        return X, counter[0]

    def decode(self, output: int, value) -> object:
        """Map a model output back to a label value (class string or float)."""
        if self.task_ == CLASSIFICATION:
            label = self.labels[output // self.horizon]
            return self.classes_[label][int(value)]
        return float(value)

    @property
    def horizon(self) -> int:
        return self.window[1] if self.window else 1

    # -- state --------------------------------------------------------------------

    def scaler_state(self) -> list[dict]:
        return [{"column": s["column"], "kind": s["kind"], "params": list(s["params"])}
                for s in self.scaler_]

    def get_state(self) -> dict:
        check_is_fitted(self, "scaler_")
        return {
            "features": [{"name": c.name, "type": c.kind} for c in self.feature_columns_],
            "labels": [{"name": c.name, "type": c.kind} for c in self.label_columns_],
            "scaling": self.scaling,
            "missing": self.missing,
            "sequential": bool(self.sequential),
            "window": list(self.window) if self.window else None,
            "scaler": self.scaler_state(),
            "encoder": {k: list(v) for k, v in self.encoder_.items()},
            "impute": dict(self.impute_),
            "classes": {k: list(v) for k, v in self.classes_.items()},
            "task": self.task_,
        }

    @classmethod
    def from_state(cls, state: dict) -> "Preprocessor":
        window = state.get("window")
        p = cls(features=[f["name"] for f in state["features"]],
                labels=[f["name"] for f in state["labels"]],
                scaling=state.get("scaling", "none"), missing=state.get("missing", "drop"),
                window=tuple(window) if window else None,
                sequential=bool(state.get("sequential", False)))
        p.feature_columns_ = [Column(f["name"], f.get("type", NUMERIC)) for f in state["features"]]
        p.label_columns_ = [Column(f["name"], f.get("type", NUMERIC)) for f in state["labels"]]
        p.encoder_ = {k: list(v) for k, v in state.get("encoder", {}).items()}
        for c in p.feature_columns_:
            if c.kind == CATEGORICAL and c.name not in p.encoder_:
                raise DatasetError(f"categorical feature '{c.name}' has no encoder categories")
        p.impute_ = dict(state.get("impute", {}))
        p.classes_ = {k: list(v) for k, v in state.get("classes", {}).items()}
        p.task_ = state.get("task") or (CLASSIFICATION if p.classes_ else REGRESSION)
        p.expanded_names_ = p._expanded_names()
        scaler = state.get("scaler") or [
            {"column": n, "kind": "none", "params": []} for n in p.expanded_names_]
        if len(scaler) != len(p.expanded_names_):
            raise DatasetError(
                f"scaler state has {len(scaler)} columns, schema expands to "
                f"{len(p.expanded_names_)}")
        p.scaler_ = [_entry_from_params(s["column"], s["kind"], s.get("params", []))
                     for s in scaler]
        return p


def _fill_value(values: list, kind: str):
    present = [v for v in values if v is not None]
    if not present:
        raise PreprocessError("cannot impute a column with no values")
    if kind == CATEGORICAL:
        counts = Counter(present)
        best = max(counts.values())
        return min(v for v, c in counts.items() if c == best)
    mean = float(np.mean(np.asarray(present, dtype=float)))
    return int(round(mean)) if kind == TIMESTAMP else mean


def _entry_from_params(column: str, kind: str, params) -> dict:
    if kind == "minmax":
        lo, hi = params
        rng = hi - lo
        return {"column": column, "kind": kind, "params": [lo, hi],
                "shift": lo, "scale": rng if rng != 0 else 1.0}
    if kind == "zscore":
        mean, std = params
        return {"column": column, "kind": kind, "params": [mean, std],
                "shift": mean, "scale": std if std != 0 else 1.0}
    if kind == "none":
        return {"column": column, "kind": kind, "params": [], "shift": 0.0, "scale": 1.0}
    raise PreprocessError(f"unknown scaling '{kind}'")


def _scaler_entry(kind: str, column: str, values: np.ndarray) -> dict:
    if kind == "minmax":
        return _entry_from_params(column, kind, [float(values.min()), float(values.max())])
    if kind == "zscore":
        return _entry_from_params(column, kind, [float(values.mean()), float(values.std())])
    return _entry_from_params(column, "none", [])


def preprocess(dataset: Dataset, features, labels, scaling: str = "none",
               missing: str = "drop", window=None, sequential: bool = False):
    """Fit a :class:`Preprocessor` and transform ``dataset`` in one go."""
    pre = Preprocessor(features, labels, scaling, missing, window, sequential)
    return pre.fit(dataset), pre.transform(dataset)

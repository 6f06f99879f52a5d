"""The five built-in learners.

All follow the scikit-learn estimator protocol (constructor arguments are
hyperparameters, ``fit`` returns ``self``, fitted state ends in ``_``), so
they work with ``clone``, ``get_params`` and pipelines.  Classifiers expect
integer class codes; ``classes_`` is kept sorted, and any tie is resolved in
favour of the smallest class code.

Each estimator also round-trips its fitted state through plain JSON-able
dictionaries (``get_state`` / ``from_state``) for the model file format.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


class FitError(ValueError):
    pass


class SingularSystemError(FitError):
    pass


def _check_classification_target(y) -> np.ndarray:
    classes = np.unique(y)
    if classes.size < 2:
        raise FitError("classification needs at least two classes; only one class present")
    return classes


def _as_2d_target(y) -> tuple[np.ndarray, bool]:
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        return y.reshape(-1, 1), True
    return y, False


class BaselineModel(BaseEstimator):
    """Majority class (classification) or per-output mean (regression)."""

    def __init__(self, task: str = "classification"):
        self.task = task

    def fit(self, X, y):
        X = check_array(X)
        if self.task == "classification":
            y = np.asarray(y).astype(int)
            self.classes_ = np.unique(y)
            counts = np.array([np.sum(y == c) for c in self.classes_])
            self.majority_ = int(self.classes_[int(np.argmax(counts))])
            self.priors_ = counts / counts.sum()
        else:
            Y, self._flat = _as_2d_target(y)
            self.mean_ = Y.mean(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X)
        if self.task == "classification":
            return np.full(X.shape[0], self.majority_, dtype=int)
        out = np.tile(self.mean_, (X.shape[0], 1))
        return out.ravel() if self._flat else out

    def predict_proba(self, X):
        X = check_array(X)
        return np.tile(self.priors_, (X.shape[0], 1))

    def get_state(self) -> dict:
        if self.task == "classification":
            return {"classes": self.classes_.tolist(), "majority": self.majority_,
                    "priors": self.priors_.tolist(), "n_features": self.n_features_in_}
        return {"mean": self.mean_.tolist(), "flat": self._flat,
                "n_features": self.n_features_in_}

    @classmethod
    def from_state(cls, params: dict, state: dict):
        est = cls(**params)
        est.n_features_in_ = int(state.get("n_features", 0))
        if est.task == "classification":
            est.classes_ = np.asarray(state["classes"], dtype=int)
            est.majority_ = int(state["majority"])
            est.priors_ = np.asarray(state["priors"], dtype=float)
        else:
            est.mean_ = np.asarray(state["mean"], dtype=float)
            est._flat = bool(state.get("flat", False))
        return est


class LinearRegression(RegressorMixin, BaseEstimator):
    """Ridge-stabilized least squares solved in closed form.

    Solves ``(A^T A + ridge * D) w = A^T y`` where ``A`` is ``X`` with a
    leading column of ones and ``D`` is the identity with a zero in the
    intercept slot.  Multi-output targets get one weight vector per column.
    ``ridge=0`` is plain ordinary least squares.
    """

    def __init__(self, ridge: float = 1e-8):
        self.ridge = ridge

    def fit(self, X, y):
        X = check_array(X)
        Y, flat = _as_2d_target(y)
        if Y.shape[0] != X.shape[0]:
            raise FitError("X and y have different row counts")
        n, d = X.shape
        A = np.hstack([np.ones((n, 1)), X])
        gram = A.T @ A
        penalty = np.eye(d + 1) * float(self.ridge)
        penalty[0, 0] = 0.0
        system = gram + penalty
        if np.linalg.matrix_rank(system) < d + 1 or np.linalg.cond(system) > 1e14:
            raise SingularSystemError(
                f"normal equations are singular (ridge={self.ridge}); "
                "features are collinear or too few rows")
        sol = np.linalg.solve(system, A.T @ Y)
        self.intercept_ = sol[0]
        self.coef_ = sol[1:].T  # (outputs, features)
        self._flat = flat
        self.n_features_in_ = d
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        out = X @ self.coef_.T + self.intercept_
        return out.ravel() if self._flat else out

    def get_state(self) -> dict:
        return {"weights": self.coef_.tolist(), "intercept": self.intercept_.tolist(),
                "flat": self._flat}

    @classmethod
    def from_state(cls, params: dict, state: dict):
        est = cls(**params)
        w = np.asarray(state["weights"], dtype=float)
        b = np.atleast_1d(np.asarray(state["intercept"], dtype=float))
        if w.ndim == 1:
            w = w.reshape(1, -1)
        if w.shape[0] != b.shape[0]:
            raise ValueError("weights and intercept disagree on the number of outputs")
        est.coef_, est.intercept_ = w, b
        est._flat = bool(state.get("flat", w.shape[0] == 1))
        est.n_features_in_ = w.shape[1]
        return est


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


class LogisticRegression(ClassifierMixin, BaseEstimator):
    """Binary logistic regression by full-batch gradient descent from zero weights."""

    def __init__(self, learning_rate: float = 0.1, iterations: int = 500):
        self.learning_rate = learning_rate
        self.iterations = iterations

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = _check_classification_target(y)
        if self.classes_.size != 2:
            raise FitError("logistic_regression is binary; got "
                           f"{self.classes_.size} classes")
        t = (y == self.classes_[1]).astype(float)
        n, d = X.shape
        w = np.zeros(d)
        b = 0.0
        lr = float(self.learning_rate)
        for _ in range(int(self.iterations)):
            p = _sigmoid(X @ w + b)
            err = p - t
            w = w - lr * (X.T @ err) / n
            b = b - lr * float(err.mean())
        self.coef_, self.intercept_ = w, b
        self.n_features_in_ = d
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        p = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        # p = 0.5 exactly goes to the smaller class code
        return np.where(self.decision_function(X) > 0, self.classes_[1], self.classes_[0])

    def get_state(self) -> dict:
        return {"classes": self.classes_.tolist(), "weights": self.coef_.tolist(),
                "intercept": float(self.intercept_)}

    @classmethod
    def from_state(cls, params: dict, state: dict):
        est = cls(**params)
        est.classes_ = np.asarray(state["classes"], dtype=int)
        est.coef_ = np.asarray(state["weights"], dtype=float)
        est.intercept_ = float(state["intercept"])
        est.n_features_in_ = est.coef_.shape[0]
        return est


class KNNModel(BaseEstimator):
    """k-nearest neighbours on an internally standardized copy of the training set.

    Neighbours are ordered by Euclidean distance, then by training-row index.
    Classification votes; ties go to the smallest class code.  Regression
    averages the neighbours' targets.
    """

    def __init__(self, k: int = 5, task: str = "classification"):
        self.k = k
        self.task = task

    def fit(self, X, y):
        X = check_array(X)
        if int(self.k) < 1:
            raise FitError("k must be at least 1")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        self.train_X_ = (X - self.mean_) / self.scale_
        if self.task == "classification":
            y = np.asarray(y).astype(int)
            self.classes_ = _check_classification_target(y)
            self.train_y_ = y
        else:
            self.train_y_, self._flat = _as_2d_target(y)
        self.n_features_in_ = X.shape[1]
        return self

    def _neighbours(self, X) -> np.ndarray:
        check_is_fitted(self, "train_X_")
        Z = (check_array(X) - self.mean_) / self.scale_
        k = min(int(self.k), self.train_X_.shape[0])
        out = np.empty((Z.shape[0], k), dtype=int)
        chunk = max(1, 2_000_000 // max(1, self.train_X_.size))
        for s in range(0, Z.shape[0], chunk):
            diff = Z[s:s + chunk, None, :] - self.train_X_[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            out[s:s + chunk] = np.argsort(d2, axis=1, kind="stable")[:, :k]
        return out

    def predict_proba(self, X):
        nb = self._neighbours(X)
        votes = self.train_y_[nb]
        counts = np.stack([(votes == c).sum(axis=1) for c in self.classes_], axis=1)
        return counts / nb.shape[1]

    def predict(self, X):
        if self.task == "classification":
            return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
        nb = self._neighbours(X)
        out = self.train_y_[nb].mean(axis=1)
        return out.ravel() if self._flat else out

    def get_state(self) -> dict:
        state = {"mean": self.mean_.tolist(), "scale": self.scale_.tolist(),
                 "train_X": self.train_X_.tolist()}
        if self.task == "classification":
            state.update(classes=self.classes_.tolist(), train_y=self.train_y_.tolist())
        else:
            state.update(train_y=self.train_y_.tolist(), flat=self._flat)
        return state

    @classmethod
    def from_state(cls, params: dict, state: dict):
        est = cls(**params)
        est.mean_ = np.asarray(state["mean"], dtype=float)
        est.scale_ = np.asarray(state["scale"], dtype=float)
        est.train_X_ = np.asarray(state["train_X"], dtype=float).reshape(-1, est.mean_.size)
        if est.task == "classification":
            est.classes_ = np.asarray(state["classes"], dtype=int)
            est.train_y_ = np.asarray(state["train_y"], dtype=int)
        else:
            est.train_y_ = np.asarray(state["train_y"], dtype=float).reshape(
                est.train_X_.shape[0], -1)
            est._flat = bool(state.get("flat", False))
        est.n_features_in_ = est.mean_.size
        return est


class GaussianNB(ClassifierMixin, BaseEstimator):
    """Gaussian naive Bayes with population variances floored at ``var_floor``."""

    def __init__(self, var_floor: float = 1e-9):
        self.var_floor = var_floor

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        y = y.astype(int)
        self.classes_ = _check_classification_target(y)
        self.priors_ = np.array([np.mean(y == c) for c in self.classes_])
        self.means_ = np.stack([X[y == c].mean(axis=0) for c in self.classes_])
        self.variances_ = np.maximum(
            np.stack([X[y == c].var(axis=0) for c in self.classes_]), self.var_floor)
        self.n_features_in_ = X.shape[1]
        return self

    def _joint_log_likelihood(self, X):
        check_is_fitted(self, "means_")
        X = check_array(X)
        ll = -0.5 * (np.log(2 * np.pi * self.variances_)[None, :, :]
                     + (X[:, None, :] - self.means_[None, :, :]) ** 2
                     / self.variances_[None, :, :]).sum(axis=2)
        return ll + np.log(self.priors_)[None, :]

    def predict_proba(self, X):
        jll = self._joint_log_likelihood(X)
        jll = jll - jll.max(axis=1, keepdims=True)
        p = np.exp(jll)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self._joint_log_likelihood(X), axis=1)]

    def get_state(self) -> dict:
        return {"classes": self.classes_.tolist(), "priors": self.priors_.tolist(),
                "means": self.means_.tolist(), "variances": self.variances_.tolist()}

    @classmethod
    def from_state(cls, params: dict, state: dict):
        est = cls(**params)
        est.classes_ = np.asarray(state["classes"], dtype=int)
        est.priors_ = np.asarray(state["priors"], dtype=float)
        est.means_ = np.asarray(state["means"], dtype=float)
        est.variances_ = np.asarray(state["variances"], dtype=float)
        est.n_features_in_ = est.means_.shape[1]
        return est

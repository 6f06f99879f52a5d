"""Cross-validation and grid-search AutoML."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from stf.ml.estimators import FitError
from stf.ml.metrics import evaluate
from stf.ml.models import METRICS, ModelSpec, fit_estimators, predict_matrix
from stf.ml.preprocessing import CLASSIFICATION, REGRESSION, PreparedData
from stf.ml.prng import SplitMix64

DEFAULT_FOLDS = 5
DEFAULT_BUDGET = 24


class AutoMLError(ValueError):
    pass


def fold_sizes(n: int, folds: int) -> list[int]:
    base, rem = divmod(n, folds)
    return [base + (1 if i < rem else 0) for i in range(folds)]


def kfold_split(n: int, folds: int, seed: int = 0, shuffle: bool = True) -> list[np.ndarray]:
    """Test-index arrays for each fold.

    Rows are permuted with a seeded SplitMix64 Fisher-Yates shuffle unless
    ``shuffle`` is false, in which case folds are contiguous blocks in order.
    Fold sizes are ``n // folds``, the remainder going one each to the first folds.
    """
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise ValueError(f"too few rows ({n}) for {folds} folds")
    order = SplitMix64(seed).permutation(n) if shuffle else list(range(n))
    out, start = [], 0
    for size in fold_sizes(n, folds):
        out.append(np.asarray(order[start:start + size], dtype=int))
        start += size
    return out


def score_predictions(pred: np.ndarray, truth: np.ndarray, task: str, metric: str) -> float:
    """Metric over a prediction matrix; classification averages over outputs."""
    if task == REGRESSION:
        return evaluate(pred.ravel(), truth.ravel(), task).score(metric)
    scores = [evaluate(pred[:, j].tolist(), truth[:, j].tolist(), task).score(metric)
              for j in range(truth.shape[1])]
    return float(np.mean(scores))


@dataclass
class CVResult:
    mean: float
    per_fold: list[float]


def kfold_cv(spec: ModelSpec, data: PreparedData, folds: int = DEFAULT_FOLDS, seed: int = 0,
             metric: Optional[str] = None) -> CVResult:
    """k-fold cross-validated score of ``spec`` on ``data``.

    Sequential data keeps its time order (contiguous folds, no shuffle).
    """
    metric = metric or METRICS[data.task][0]
    n = len(data)
    splits = kfold_split(n, folds, seed, shuffle=not data.sequential)
    scores = []
    for test_idx in splits:
        mask = np.ones(n, dtype=bool)
        mask[test_idx] = False
        est = fit_estimators(spec, data.X[mask], data.Y[mask], data.task)
        pred = predict_matrix(est, data.X[test_idx], data.task)
        scores.append(score_predictions(pred, data.Y[test_idx], data.task, metric))
    return CVResult(float(np.mean(scores)), scores)


def candidate_grid(task: str, n_classes: Optional[int] = None) -> list[ModelSpec]:
    """Search space in enumeration order.

    Algorithms go simplest first (baseline, linear_regression,
    logistic_regression, knn, gaussian_nb), each with its hyperparameter values
    ascending.  Only algorithms applicable to ``task`` are listed; logistic
    regression is skipped for more than two classes.
    """
    grid = []
    grid.append(ModelSpec("baseline", {}))
    if task == REGRESSION:
        grid += [ModelSpec("linear_regression", {"ridge": r}) for r in (1e-8, 1e-2, 1.0)]
    if task == CLASSIFICATION and (n_classes is None or n_classes == 2):
        grid += [ModelSpec("logistic_regression", {"learning_rate": lr, "iterations": it})
                 for lr in (0.01, 0.1) for it in (200, 500)]
    grid += [ModelSpec("knn", {"k": k}) for k in (1, 3, 5, 7)]
    if task == CLASSIFICATION:
        grid.append(ModelSpec("gaussian_nb", {}))
    return grid


def automl_search(data: PreparedData, task: Optional[str] = None, metric: Optional[str] = None,
                  folds: int = DEFAULT_FOLDS, budget: Optional[int] = DEFAULT_BUDGET,
                  seed: int = 0):
    """Pick the best candidate by cross-validation.

    Returns ``(best_spec, leaderboard)``.  The leaderboard is sorted best first;
    ties keep enumeration order, which puts simpler algorithms and smaller
    hyperparameters first.  Candidates whose training fails are listed last
    with a ``None`` score.
    """
    task = task or data.task
    metric = metric or METRICS[task][0]
    if metric not in METRICS.get(task, ()):
        raise AutoMLError(f"metric '{metric}' does not apply to {task}")
    n_classes = None
    if task == CLASSIFICATION:
        counts = [np.unique(data.Y[:, j]).size for j in range(data.Y.shape[1])]
        if min(counts) < 2:
            raise AutoMLError("degenerate labels: classification data holds a single class")
        n_classes = max(counts)
    grid = candidate_grid(task, n_classes)
    if budget is not None:
        if budget < 1:
            raise AutoMLError("budget must be at least 1")
        grid = grid[:budget]
    if not grid:
        raise AutoMLError("no applicable algorithm")
    board = []
    for order, spec in enumerate(grid):
        entry = {"rank_key": order, "algorithm": spec.algorithm,
                 "hyperparams": spec.resolved(), "metric": metric}
        try:
            cv = kfold_cv(spec, data, folds, seed, metric)
            entry.update(score=cv.mean, per_fold=cv.per_fold, error=None)
        except (FitError, ValueError) as e:
            entry.update(score=None, per_fold=[], error=str(e))
        board.append((spec, entry))
    lower_better = metric == "rmse"

    def key(item):
        spec, e = item
        if e["score"] is None:
            return (1, 0.0, e["rank_key"])
        return (0, e["score"] if lower_better else -e["score"], e["rank_key"])

    board.sort(key=key)
    if board[0][1]["score"] is None:
        raise AutoMLError("every candidate failed: " + board[0][1]["error"])
    leaderboard = []
    for spec, e in board:
        e = dict(e)
        del e["rank_key"]
        leaderboard.append(e)
    return board[0][0], leaderboard


class AutoMLSearch(BaseEstimator):
    """Estimator-style wrapper around :func:`automl_search` on prepared data."""

    def __init__(self, metric: Optional[str] = None, folds: int = DEFAULT_FOLDS,
                 budget: Optional[int] = DEFAULT_BUDGET, seed: int = 0):
        self.metric = metric
        self.folds = folds
        self.budget = budget
        self.seed = seed

    def fit(self, data: PreparedData, y=None):
        from stf.ml.models import fit as fit_model

        self.best_spec_, self.leaderboard_ = automl_search(
            data, data.task, self.metric, self.folds, self.budget, self.seed)
        self.model_ = fit_model(self.best_spec_, data, self.seed)
        return self

    def predict(self, X):
        return self.model_.predict_matrix(np.asarray(X, dtype=float))

"""Independent reference computations used to derive expected values.

Nothing here imports the package's algorithms; each oracle recomputes its
answer from first principles (plain loops, numpy least squares, enumeration).
"""

import math

import numpy as np


def confusion_counts(preds, truth, positive):
    tp = sum(p == positive and t == positive for p, t in zip(preds, truth))
    fp = sum(p == positive and t != positive for p, t in zip(preds, truth))
    fn = sum(p != positive and t == positive for p, t in zip(preds, truth))
    return tp, fp, fn


def prf(preds, truth, positive):
    tp, fp, fn = confusion_counts(preds, truth, positive)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def lstsq_fit(X, y):
    """Ordinary least squares with intercept via numpy's SVD solver."""
    A = np.c_[np.asarray(X, dtype=float), np.ones(len(y))]
    coef = np.linalg.lstsq(A, np.asarray(y, dtype=float), rcond=None)[0]
    return coef[:-1], coef[-1]


def rmse(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return math.sqrt(float(np.mean((a - b) ** 2)))


def persistence_rmse(series, start):
    """Forecast each value from ``start`` on as the previous value."""
    y = list(series)
    return rmse(y[start - 1:len(y) - 1], y[start:])


def lag_windows(series, w, h):
    out = []
    for i in range(len(series) - w - h + 1):
        out.append((list(series[i:i + w]), list(series[i + w:i + w + h])))
    return out


def gaussian_pdf(x, mean, var):
    return math.exp(-(x - mean) ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var)


def fold_sizes(n, k):
    return [n // k + (1 if i < n % k else 0) for i in range(k)]


# -- statechart path enumeration ---------------------------------------------------------

def enumerate_da_paths(states, initial, edges, max_len):
    """Path facts for a small statechart by exhaustive search.

    ``states`` maps a state to its entry action kinds (list of strings);
    ``edges`` is a list of ``(source, target, action kinds)``.  Every path from
    the initial state of at most ``max_len`` transitions is walked, running
    entry actions on arrival and exit-free transition actions on traversal.
    Returns ``(reachable, untrained_predict, unprepared_train)`` where the last
    two say whether some path executes a predict before any train, or a train
    before any preprocess.
    """
    reachable = {initial}
    untrained = unprepared = False

    def run(actions, trained, prepared):
        nonlocal untrained, unprepared
        for a in actions:
            if a == "da_predict" and not trained:
                untrained = True
            if a == "da_train":
                if not prepared:
                    unprepared = True
                trained = True
            if a == "da_preprocess":
                prepared = True
        return trained, prepared

    frontier = [(initial, *run(states[initial], False, False))]
    seen = set(frontier)
    for _ in range(max_len):
        nxt = []
        for s, trained, prepared in frontier:
            for src, dst, acts in edges:
                if src != s:
                    continue
                t2, p2 = run(acts, trained, prepared)
                t2, p2 = run(states[dst], t2, p2)
                reachable.add(dst)
                key = (dst, t2, p2)
                if key not in seen:
                    seen.add(key)
                    nxt.append(key)
        frontier = nxt
    return reachable, untrained, unprepared


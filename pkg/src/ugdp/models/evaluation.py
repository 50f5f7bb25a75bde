"""AUC, ROC points, Platt calibration and cross-validated grid search."""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError
from ..tabular import Dataset, k_fold_split
from .ensembles import EPS, clamp, fit_model, logit, params_from_dict, predict_proba, sigmoid


def _check_two_classes(labels):
    y = np.asarray(labels)
    pos = int(np.sum(y == 1))
    if pos == 0 or pos == y.size:
        raise ValueError("AUC is undefined unless both classes are present")
    return y


def auc(probs, labels) -> float:
    """Mann-Whitney AUC: P(p+ > p-) + 0.5 P(p+ = p-) over positive/negative pairs.

    Computed from midranks, so tied scores contribute one half per pair.
    """
    y = _check_two_classes(labels)
    s = np.asarray(probs, dtype=np.float64)
    order = np.argsort(s, kind="mergesort")
    s_sorted = s[order]
    # midranks: positions (1-based) averaged over runs of equal scores
    starts = np.flatnonzero(np.concatenate([[True], s_sorted[1:] != s_sorted[:-1]]))
    ends = np.concatenate([starts[1:], [len(s)]])
    mid = (starts + ends + 1) / 2.0
    ranks = np.empty(len(s))
    ranks[order] = np.repeat(mid, ends - starts)
    n_pos = float(np.sum(y == 1))
    n_neg = len(y) - n_pos
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_points(probs, labels) -> list[tuple[float, float, float]]:
    """(threshold, false positive rate, true positive rate) from (0,0) to (1,1)."""
    y = _check_two_classes(labels)
    s = np.asarray(probs, dtype=np.float64)
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    last = np.flatnonzero(np.concatenate([s_sorted[1:] != s_sorted[:-1], [True]]))
    tp = np.cumsum(y_sorted == 1)[last]
    fp = np.cumsum(y_sorted == 0)[last]
    n_pos, n_neg = tp[-1], fp[-1]
    pts = [(float("inf"), 0.0, 0.0)]
    pts += [(float(s_sorted[i]), float(f / n_neg), float(t / n_pos)) for i, f, t in zip(last, fp, tp)]
    return pts


def _fit_logistic_1d(x, y, n_iter=100, tol=1e-12):
    """Newton-Raphson for P(y=1) = sigmoid(a x + b)."""
    X = np.column_stack([x, np.ones_like(x)])
    beta = np.zeros(2)
    for _ in range(n_iter):
        p = sigmoid(X @ beta)
        w = p * (1 - p)
        grad = X.T @ (y - p)
        hess = (X * w[:, None]).T @ X + 1e-12 * np.eye(2)
        step = np.linalg.solve(hess, grad)
        beta += step
        if np.max(np.abs(step)) < tol:
            break
    return float(beta[0]), float(beta[1])


@dataclass
class Calibration:
    probs: np.ndarray
    a: float = 1.0
    b: float = 0.0
    degenerate: bool = False
    fold_params: list = field(default_factory=list)

    def apply(self, raw) -> np.ndarray:
        return clamp(sigmoid(self.a * logit(clamp(raw)) + self.b))


def calibrate_platt(raw, labels, folds=None) -> Calibration:
    """Platt scaling p -> sigmoid(a logit(p) + b), fitted by logistic regression.

    ``raw`` should be out-of-fold predictions.  With ``folds`` the returned
    probabilities are cross-fitted (each fold mapped by parameters fitted on
    the other folds); ``a`` and ``b`` are always fitted on all records and are
    the map to apply to fresh predictions.  Single-class training labels fall
    back to the identity map with ``degenerate=True``.
    """
    x = logit(clamp(raw))
    y = np.asarray(labels, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("raw probabilities and labels are not aligned")

    def fit(idx):
        yy = y[idx]
        if yy.size == 0 or yy.min() == yy.max():
            return None
        return _fit_logistic_1d(x[idx], yy)

    full = fit(np.arange(len(y)))
    if full is None:
        warnings.warn("single-class labels: Platt calibration falls back to identity")
        return Calibration(clamp(raw), degenerate=True)
    a, b = full
    degenerate = False
    out = clamp(sigmoid(a * x + b))
    fold_params = []
    if folds is not None:
        out = np.empty_like(x)
        for train, val in folds:
            ab = fit(train)
            if ab is None:
                warnings.warn("single-class calibration fold: identity map used for that fold")
                degenerate = True
                ab = (1.0, 0.0)
            fold_params.append(ab)
            out[val] = sigmoid(ab[0] * x[val] + ab[1])
        out = clamp(out)
    return Calibration(out, a, b, degenerate, fold_params)


def out_of_fold(ds: Dataset, kind: str, params, folds, seed: int) -> np.ndarray:
    oof = np.empty(len(ds))
    for f, (train, val) in enumerate(folds):
        model = fit_model(kind, ds.subset(train), params, seed + f)
        oof[val] = predict_proba(model, ds.subset(val))
    return oof


@dataclass
class CVResult:
    best_params: object
    mean_auc: float
    table: list  # (params, mean auc, fold aucs)
    oof: np.ndarray  # out-of-fold predictions of the best params


def expand_grid(grid: dict) -> list[dict]:
    keys = sorted(grid)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def cross_validate(ds: Dataset, kind: str, param_grid, k: int = 5, seed: int = 0) -> CVResult:
    """Exhaustive grid search on mean out-of-fold AUC.

    ``param_grid`` is either a list of parameter dicts or a dict of lists.
    Ties go to the smaller model (fewer trees or rounds, then shallower).
    """
    entries = expand_grid(param_grid) if isinstance(param_grid, dict) else list(param_grid)
    if not entries:
        raise ValueError("empty parameter grid")
    folds = k_fold_split(len(ds), k, seed)
    rows = []
    for entry in entries:
        params = params_from_dict(kind, entry) if isinstance(entry, dict) else entry
        oof = np.empty(len(ds))
        fold_aucs = []
        for f, (train, val) in enumerate(folds):
            model = fit_model(kind, ds.subset(train), params, seed + f)
            oof[val] = predict_proba(model, ds.subset(val))
            try:
                fold_aucs.append(auc(oof[val], ds.labels[val]))
            except ValueError:
                raise TrainingError(f"fold {f} validation set has a single class") from None
        rows.append((params, float(np.mean(fold_aucs)), fold_aucs, oof))
    best = max(rows, key=lambda r: (r[1], tuple(-v for v in r[0].size_key())))
    return CVResult(best[0], best[1], [r[:3] for r in rows], best[3])

"""Baselines on raw tower visit counts: lasso regression of weekly spend and primary-behavior classification.

Both exist to show how little raw counts carry, so the protocol is deliberately plain: standardized features,
seeded K-fold splits, a fixed grid of penalties per model.
"""
import numpy as np
from sklearn.dummy import DummyClassifier
from sklearn.linear_model import LogisticRegression
from sklearn.linear_model import LogisticRegressionCV
from sklearn.model_selection import KFold
from sklearn.model_selection import StratifiedKFold
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from . import const as _const
from .core import _logged_operation
from .core import flag
from .core import LifestyleError
from .core import log_info
from .core import require
from .matrix import SparseCountMatrix
from .types import *

LAMBDA_GRID = tuple(np.logspace(1, -4, 11))
C_GRID = tuple(float(c) for c in np.logspace(-4, 2, 7))


def _dense(X) -> Array:
    return X.toarray().astype(float) if isinstance(X, SparseCountMatrix) else np.asarray(X, dtype=float)


def lasso_objective(X: Array, y: Array, coef: Array, lam: float) -> float:
    """(1/2n) ||y - mean(y) - (X - mean(X)) b||^2 + lam ||b||_1"""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    resid = (y - y.mean()) - (X - X.mean(axis=0)) @ coef
    return float(resid @ resid / (2 * len(y)) + lam * np.abs(coef).sum())


def lasso_cd(X: Array,
             y: Array,
             lam: float,
             tol: float = 1e-10,
             max_iter: int = 10_000,
             coef: Array = None,
             ) -> Tuple[Array, float, int]:
    """Cyclic coordinate descent for the lasso with an unpenalized intercept.

    :param coef: Warm start.
    :return: (coefficients, intercept, sweeps run)
    """
    require(lam >= 0, _const.ERROR_CODE.INVALID_PARAMS, f"lambda must be >= 0, got {lam}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    x_mean, y_mean = X.mean(axis=0), y.mean()
    Xc = X - x_mean
    col_sq = (Xc * Xc).sum(axis=0) / n
    b = np.zeros(p) if coef is None else np.array(coef, dtype=float)
    resid = (y - y_mean) - Xc @ b
    sweep = 0
    for sweep in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(p):
            if col_sq[j] == 0:
                b[j] = 0.0
                continue
            rho = Xc[:, j] @ resid / n + col_sq[j] * b[j]
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
            delta = new - b[j]
            if delta:
                resid -= Xc[:, j] * delta
                b[j] = new
                max_delta = max(max_delta, abs(delta))
        if max_delta < tol:
            break
    return b, float(y_mean - x_mean @ b), sweep


def r2(y_true: Array, y_pred: Array) -> float:
    """1 - SS_res / SS_tot; nan when y_true is constant."""
    y_true = np.asarray(y_true, dtype=float)
    ss_tot = np.sum((y_true - y_true.mean()) ** 2)
    if ss_tot == 0:
        return float('nan')
    return float(1 - np.sum((y_true - np.asarray(y_pred, dtype=float)) ** 2) / ss_tot)


def _lasso_path(X_train, y_train, lambdas, tol):
    scaler = StandardScaler().fit(X_train)
    Z = scaler.transform(X_train)
    coef, path = None, []
    for lam in lambdas:
        coef, intercept, _ = lasso_cd(Z, y_train, lam, tol=tol, coef=coef)
        path.append((coef.copy(), intercept))
    return scaler, path


@_logged_operation()
def lasso_regression(X: Union[SparseCountMatrix, Array],
                     y: Array,
                     lambda_grid: Iterable[float] = LAMBDA_GRID,
                     folds: int = 5,
                     seed: int = 0,
                     tol: float = 1e-8,
                     ) -> List[LassoRow]:
    """Lasso regularization path with K-fold train/test R^2 per lambda.

    Features are standardized on each training split. ``nnz`` counts nonzero coefficients of a fit on all rows.

    :raises LifestyleError: INVALID_PARAMS when y is constant or the shapes disagree.
    """
    X = _dense(X)
    y = np.asarray(y, dtype=float)
    require(X.shape[0] == y.shape[0], _const.ERROR_CODE.SHAPE_MISMATCH,
            f"X has {X.shape[0]} rows, y has {y.shape[0]}")
    require(y.shape[0] >= 2, _const.ERROR_CODE.EMPTY_INPUT, "Need at least 2 samples")
    require(folds >= 2 and folds <= y.shape[0], _const.ERROR_CODE.INVALID_PARAMS,
            f"folds must be in 2..{y.shape[0]}, got {folds}")
    if np.all(y == y[0]):
        raise LifestyleError(_const.ERROR_CODE.INVALID_PARAMS, "y is constant; R^2 is undefined")
    lambdas = sorted((float(lam) for lam in lambda_grid), reverse=True)
    r2_train = np.full((folds, len(lambdas)), np.nan)
    r2_test = np.full((folds, len(lambdas)), np.nan)
    for f, (train, test) in enumerate(KFold(folds, shuffle=True, random_state=seed).split(X)):
        scaler, path = _lasso_path(X[train], y[train], lambdas, tol)
        Z_train, Z_test = scaler.transform(X[train]), scaler.transform(X[test])
        for i, (coef, intercept) in enumerate(path):
            r2_train[f, i] = r2(y[train], Z_train @ coef + intercept)
            r2_test[f, i] = r2(y[test], Z_test @ coef + intercept)
    _, full_path = _lasso_path(X, y, lambdas, tol)
    rows = [LassoRow(lam, float(np.nanmean(r2_train[:, i])), float(np.nanmean(r2_test[:, i])),
                     int(np.count_nonzero(full_path[i][0])))
            for i, lam in enumerate(lambdas)]
    best = max(rows, key=lambda row: row.r2_test)
    log_info('Lasso Path', 'lasso_path', lambdas=len(rows), best_lambda=best.lam, best_r2_test=best.r2_test)
    return rows


def primary_behavior(theta: Array) -> Union[int, Array]:
    """Index of the highest-weighted behavior; ties go to the smallest index. Works on one row or a matrix."""
    theta = np.asarray(theta, dtype=float)
    require(theta.size > 0 and theta.shape[-1] > 0, _const.ERROR_CODE.EMPTY_INPUT, "Empty topic proportions")
    index = np.argmax(theta, axis=-1)
    return int(index) if theta.ndim == 1 else index


def _logistic(y_train: Array, C_grid: Sequence[float], seed: int):
    """Standardized multinomial logistic regression with C picked by an inner stratified K-fold on accuracy.

    Ties in inner accuracy go to the smallest C. With fewer than two members in some class the inner split is
    impossible, and the smallest C is used as is.
    """
    C_grid = sorted(float(c) for c in C_grid)
    inner = min(_const.INNER_FOLDS, int(np.unique(y_train, return_counts=True)[1].min()))
    if inner < 2:
        return make_pipeline(StandardScaler(), LogisticRegression(C=C_grid[0], max_iter=1000))
    cv = StratifiedKFold(inner, shuffle=True, random_state=seed)
    return make_pipeline(StandardScaler(), LogisticRegressionCV(Cs=C_grid, cv=cv, scoring='accuracy', max_iter=1000))


@_logged_operation()
def classify_primary(X: Union[SparseCountMatrix, Array],
                     labels: Array,
                     folds: int = 5,
                     seed: int = 0,
                     C_grid: Iterable[float] = C_GRID,
                     ) -> ClassificationReport:
    """Cross-validated accuracy of a majority-class predictor and a ridge-penalized multinomial logistic regression.

    The logistic penalty is chosen inside every training fold from ``C_grid``, so on labels that carry no signal
    it falls back to the strongest penalty and scores like the majority predictor. A training fold holding a single
    class gets the majority predictor only, and is flagged.
    """
    X = _dense(X)
    labels = np.asarray(labels)
    require(X.shape[0] == labels.shape[0], _const.ERROR_CODE.SHAPE_MISMATCH,
            f"X has {X.shape[0]} rows, labels has {labels.shape[0]}")
    classes, counts = np.unique(labels, return_counts=True)
    require(classes.size >= 2, _const.ERROR_CODE.INVALID_PARAMS, "Need at least 2 classes")
    require(2 <= folds <= labels.shape[0], _const.ERROR_CODE.INVALID_PARAMS,
            f"folds must be in 2..{labels.shape[0]}, got {folds}")
    C_grid = list(C_grid)
    require(len(C_grid) > 0 and min(C_grid) > 0, _const.ERROR_CODE.INVALID_PARAMS,
            f"C_grid must be a nonempty list of values > 0, got {C_grid}")
    rows, flags = [], []
    for f, (train, test) in enumerate(KFold(folds, shuffle=True, random_state=seed).split(X)):
        majority = DummyClassifier(strategy='most_frequent').fit(X[train], labels[train])
        rows.append(AccuracyRow('majority', f, float(majority.score(X[test], labels[test]))))
        if np.unique(labels[train]).size < 2:
            flags.append(f"fold {f}: single class in training split")
            flag(_const.ERROR_CODE.INVALID_PARAMS, f'Fold {f} trains on a single class', fold=f)
            continue
        model = _logistic(labels[train], C_grid, seed).fit(X[train], labels[train])
        rows.append(AccuracyRow('logistic', f, float(model.score(X[test], labels[test]))))
    majority_frequency = float(counts.max() / counts.sum())
    log_info('Primary Behavior Classification', 'classify_primary', majority_frequency=majority_frequency,
             accuracy={c: float(np.mean([r.accuracy for r in rows if r.classifier == c]))
                       for c in ('majority', 'logistic') if any(r.classifier == c for r in rows)})
    return ClassificationReport(rows, majority_frequency, flags)

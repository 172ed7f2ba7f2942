"""Group-sparse collective matrix factorization of the shopping matrix S and the mobility matrix M.

Both views share the latent lifestyles U. The loss is

    ||P(S - U Vs^T)||^2 + ||M - U Vm^T||^2 + lambda_u ||U||^2 + lambda_s ||Vs||^2 + lambda_m ||Vm||^2
        + gamma_s sum_k ||Vs[:, k]|| + gamma_m sum_k ||Vm[:, k]||

where P keeps the observed S rows. The column penalties can zero a loading column in one view, leaving a factor that
acts on the other view only.
"""
import dataclasses
import json
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel
from joblib import delayed
from scipy import linalg

from . import const as _const
from . import helpers as _h
from .core import _logged_operation
from .core import LifestyleError
from .core import log_info
from .core import require
from .state import global_state as _state
from .types import *

_TINY = 1e-300


@dataclasses.dataclass(frozen=True)
class CmfConfig:
    rank: int = 3
    lambda_u: float = 0.1
    lambda_s: float = 0.1
    lambda_m: float = 0.1
    gamma_s: float = 0.1
    gamma_m: float = 0.1
    tol: float = _const.CMF_TOL
    max_iter: int = _const.CMF_MAX_ITER
    inner_iter: int = _const.CMF_INNER_ITER
    seed: int = 0
    center: bool = False
    clamp: bool = False

    def errors(self) -> List[str]:
        errors = []
        if not isinstance(self.rank, (int, np.integer)) or self.rank < 1:
            errors.append(f"rank: must be an integer >= 1, got {self.rank!r}")
        for name in ('lambda_u', 'lambda_s', 'lambda_m', 'gamma_s', 'gamma_m'):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                errors.append(f"{name}: must be finite and >= 0, got {value!r}")
        if not self.tol > 0:
            errors.append(f"tol: must be > 0, got {self.tol!r}")
        if self.max_iter < 1:
            errors.append(f"max_iter: must be >= 1, got {self.max_iter!r}")
        if self.inner_iter < 1:
            errors.append(f"inner_iter: must be >= 1, got {self.inner_iter!r}")
        return errors

    def validate(self) -> 'CmfConfig':
        errors = self.errors()
        if errors:
            raise LifestyleError(_const.ERROR_CODE.INVALID_PARAMS, '; '.join(errors))
        return self

    def replace(self, **changes) -> 'CmfConfig':
        return dataclasses.replace(self, **changes)


class RowMask:
    """Rows of S whose entries enter the loss."""

    def __init__(self, observed: Iterable[int], n: int):
        observed = np.unique(np.asarray(list(observed), dtype=np.int64))
        require(observed.size == 0 or (observed[0] >= 0 and observed[-1] < n), _const.ERROR_CODE.INVALID_PARAMS,
                f"Observed rows must lie in 0..{n - 1}")
        self.observed = observed
        self.n = int(n)

    @classmethod
    def all(cls, n: int) -> 'RowMask':
        return cls(range(n), n)

    @classmethod
    def without(cls, rows: Iterable[int], n: int) -> 'RowMask':
        keep = np.ones(n, dtype=bool)
        keep[np.asarray(list(rows), dtype=np.int64)] = False
        return cls(np.flatnonzero(keep), n)

    @property
    def unobserved(self) -> Array:
        return np.setdiff1d(np.arange(self.n), self.observed)

    def __len__(self):
        return int(self.observed.size)

    def __repr__(self):
        return f"RowMask(observed={len(self)}, n={self.n})"


class CmfModel:
    def __init__(self,
                 U: Array,
                 Vs: Array,
                 Vm: Array,
                 config: CmfConfig,
                 objective_history: Sequence[float] = (),
                 s_offset: Array = None,
                 m_offset: Array = None,
                 converged: bool = False,
                 ):
        self.U = np.asarray(U, dtype=float)
        self.Vs = np.asarray(Vs, dtype=float)
        self.Vm = np.asarray(Vm, dtype=float)
        self.config = config
        self.objective_history = [float(f) for f in objective_history]
        self.s_offset = np.zeros(self.Vs.shape[0]) if s_offset is None else np.asarray(s_offset, dtype=float)
        self.m_offset = np.zeros(self.Vm.shape[0]) if m_offset is None else np.asarray(m_offset, dtype=float)
        self.converged = converged
        require(self.Vs.shape[1] == self.U.shape[1], _const.ERROR_CODE.SHAPE_MISMATCH,
                f"U has rank {self.U.shape[1]} but Vs has {self.Vs.shape[1]} columns")

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    def to_dict(self) -> dict:
        return _h.make_native(dict(
            U=self.U, Vs=self.Vs, Vm=self.Vm, config=dataclasses.asdict(self.config),
            objective_history=self.objective_history, s_offset=self.s_offset, m_offset=self.m_offset,
            converged=self.converged,
        ))

    @classmethod
    def from_dict(cls, d: dict) -> 'CmfModel':
        config = CmfConfig(**d['config'])
        U, Vs, Vm = (np.asarray(d[k], dtype=float).reshape(len(d[k]), config.rank) for k in ('U', 'Vs', 'Vm'))
        return cls(U, Vs, Vm, config, d.get('objective_history', ()), d.get('s_offset'), d.get('m_offset'),
                   d.get('converged', False))

    def __repr__(self):
        return (f"CmfModel(n={self.U.shape[0]}, K={self.Vs.shape[0]}, d={self.Vm.shape[0]}, r={self.rank}, "
                f"iterations={max(0, len(self.objective_history) - 1)})")


def save(model: CmfModel, path: PathLike):
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True))


def load(path: PathLike) -> CmfModel:
    try:
        return CmfModel.from_dict(json.loads(Path(path).read_text()))
    except FileNotFoundError:
        raise LifestyleError(_const.ERROR_CODE.NOT_FOUND, f"No CMF model at {path}")


def _as_mask(mask: Union[RowMask, Iterable[int]], n: int) -> RowMask:
    return mask if isinstance(mask, RowMask) else RowMask(mask, n)


def _check(S, M, mask) -> Tuple[Array, Array, RowMask]:
    S = np.asarray(S, dtype=float)
    M = np.asarray(M, dtype=float)
    if S.ndim != 2 or M.ndim != 2 or S.shape[0] != M.shape[0]:
        raise LifestyleError(_const.ERROR_CODE.SHAPE_MISMATCH,
                             f"S of shape {S.shape} and M of shape {M.shape} must share their row count")
    mask = _as_mask(mask, S.shape[0])
    require(mask.n == S.shape[0], _const.ERROR_CODE.SHAPE_MISMATCH,
            f"mask covers {mask.n} rows, S has {S.shape[0]}")
    require(bool(np.isfinite(S[mask.observed]).all()), _const.ERROR_CODE.NON_FINITE, "Observed S rows hold nan/inf")
    require(bool(np.isfinite(M).all()), _const.ERROR_CODE.NON_FINITE, "M must have no missing rows or nan/inf")
    return S, M, mask


def group_norms(V: Array) -> Array:
    """Euclidean norm of every column."""
    return np.linalg.norm(np.asarray(V, dtype=float), axis=0)


def _penalties(U, Vs, Vm, config: CmfConfig) -> float:
    return (config.lambda_u * np.sum(U * U) + config.lambda_s * np.sum(Vs * Vs) + config.lambda_m * np.sum(Vm * Vm)
            + config.gamma_s * group_norms(Vs).sum() + config.gamma_m * group_norms(Vm).sum())


def _objective(So: Array, Mc: Array, obs: Array, U: Array, Vs: Array, Vm: Array, config: CmfConfig) -> float:
    rs = So - U[obs] @ Vs.T
    rm = Mc - U @ Vm.T
    return float(np.sum(rs * rs) + np.sum(rm * rm) + _penalties(U, Vs, Vm, config))


def _centered(S: Array, M: Array, mask: RowMask, s_offset: Array, m_offset: Array) -> Tuple[Array, Array]:
    return S[mask.observed] - s_offset, M - m_offset


@_logged_operation()
def objective(S: Array, M: Array, mask: Union[RowMask, Iterable[int]], model: CmfModel,
              config: CmfConfig = None) -> float:
    """Loss of a model on (S, M) under the mask, penalties from ``config`` (the model's own by default)."""
    S, M, mask = _check(S, M, mask)
    config = config or model.config
    if (model.U.shape[0] != S.shape[0] or model.Vs.shape[0] != S.shape[1] or model.Vm.shape[0] != M.shape[1]):
        raise LifestyleError(_const.ERROR_CODE.SHAPE_MISMATCH, f"{model} does not fit S {S.shape} and M {M.shape}")
    So, Mc = _centered(S, M, mask, model.s_offset, model.m_offset)
    return _objective(So, Mc, mask.observed, model.U, model.Vs, model.Vm, config)


def gradients(S: Array, M: Array, mask: Union[RowMask, Iterable[int]], model: CmfModel,
              config: CmfConfig = None) -> Tuple[Array, Array, Array]:
    """Gradients of the smooth part of the loss (everything but the column penalties) w.r.t. U, Vs and Vm."""
    S, M, mask = _check(S, M, mask)
    config = config or model.config
    So, Mc = _centered(S, M, mask, model.s_offset, model.m_offset)
    U, Vs, Vm = model.U, model.Vs, model.Vm
    rs = np.zeros((U.shape[0], Vs.shape[0]))
    rs[mask.observed] = So - U[mask.observed] @ Vs.T
    rm = Mc - U @ Vm.T
    dU = -2 * rs @ Vs - 2 * rm @ Vm + 2 * config.lambda_u * U
    dVs = -2 * rs.T @ U + 2 * config.lambda_s * Vs
    dVm = -2 * rm.T @ U + 2 * config.lambda_m * Vm
    return dU, dVs, dVm


def _group_shrink(V: Array, threshold: float) -> Array:
    if threshold <= 0:
        return V
    norms = group_norms(V)
    scale = np.where(norms > threshold, 1 - threshold / np.maximum(norms, _TINY), 0.0)
    return V * scale[None, :]


def _prox_block(V: Array, G: Array, B: Array, const: float, lam: float, gamma: float, iterations: int) -> Array:
    """Proximal gradient on one loading block with everything else fixed.

    The smooth part ||X - U V^T||^2 + lam ||V||^2 is evaluated from the Gram matrices G = U^T U and B = X^T U.
    """
    if V.size == 0:
        return V
    H = G + lam * np.eye(G.shape[0])
    lipschitz = 2 * float(linalg.eigvalsh(H)[-1])
    t = 1.0 / lipschitz if lipschitz > 0 else 1.0

    def smooth(W):
        return const - 2 * np.sum(W * B) + np.sum((W @ H) * W)

    for _ in range(iterations):
        grad = 2 * (V @ H - B)
        f0 = smooth(V)
        while True:
            V_new = _group_shrink(V - t * grad, t * gamma)
            step = V_new - V
            bound = f0 + np.sum(grad * step) + np.sum(step * step) / (2 * t)
            if smooth(V_new) <= bound + 1e-12 * max(1.0, abs(f0)):
                break
            t /= 2
            if t < 1e-30:
                raise LifestyleError(_const.ERROR_CODE.NON_FINITE, "Step size underflow in proximal update")
        V = V_new
        if np.linalg.norm(step) <= 1e-12 * max(1.0, np.linalg.norm(V)):
            break
    return V


def _ridge_rows(design: Array, targets: Array, lambda_u: float) -> Array:
    """argmin_u ||t - u design^T||^2 + lambda_u ||u||^2 for every row t of ``targets``."""
    r = design.shape[1]
    if lambda_u > 0:
        normal = design.T @ design + lambda_u * np.eye(r)
        return linalg.cho_solve(linalg.cho_factor(normal), design.T @ targets.T).T
    return linalg.lstsq(design, targets.T)[0].T


def _update_rows(So: Array, Mc: Array, mask: RowMask, Vs: Array, Vm: Array, lambda_u: float, n: int) -> Array:
    """Exact ridge solve per user: observed rows see both views, the others see M only."""
    U = np.empty((n, Vs.shape[1]))
    obs, unobs = mask.observed, mask.unobserved
    if obs.size:
        U[obs] = _ridge_rows(np.vstack([Vs, Vm]), np.hstack([So, Mc[obs]]), lambda_u)
    if unobs.size:
        U[unobs] = _ridge_rows(Vm, Mc[unobs], lambda_u)
    return U


@_logged_operation()
def fit(S: Array, M: Array, mask: Union[RowMask, Iterable[int]], config: CmfConfig = CmfConfig()) -> CmfModel:
    """Block coordinate descent: Vs, then Vm, by proximal gradient, then every row of U by ridge least squares.

    S rows outside the mask are never read. Centering is off by default. With ``config.center`` both views are
    centered by the column means of the observed rows, and the offsets are kept on the model for prediction.

    :raises LifestyleError: NON_FINITE when the loss leaves the finite range.
    """
    config.validate()
    S, M, mask = _check(S, M, mask)
    require(len(mask) > 0, _const.ERROR_CODE.EMPTY_INPUT, "The mask observes no S rows")
    n, K = S.shape
    d = M.shape[1]
    obs = mask.observed
    if config.center:
        s_offset, m_offset = S[obs].mean(axis=0), M[obs].mean(axis=0)
    else:
        s_offset, m_offset = np.zeros(K), np.zeros(d)
    So, Mc = _centered(S, M, mask, s_offset, m_offset)
    r = config.rank
    rng = np.random.default_rng(config.seed)
    scale = 1.0 / np.sqrt(r)
    U = rng.uniform(-1, 1, size=(n, r)) * scale
    Vs = rng.uniform(-1, 1, size=(K, r)) * scale
    Vm = rng.uniform(-1, 1, size=(d, r)) * scale
    so_sq, mc_sq = float(np.sum(So * So)), float(np.sum(Mc * Mc))
    f = _objective(So, Mc, obs, U, Vs, Vm, config)
    history = [f]
    converged = False
    for iteration in range(config.max_iter):
        Uo = U[obs]
        Vs = _prox_block(Vs, Uo.T @ Uo, So.T @ Uo, so_sq, config.lambda_s, config.gamma_s, config.inner_iter)
        Vm = _prox_block(Vm, U.T @ U, Mc.T @ U, mc_sq, config.lambda_m, config.gamma_m, config.inner_iter)
        U = _update_rows(So, Mc, mask, Vs, Vm, config.lambda_u, n)
        f_new = _objective(So, Mc, obs, U, Vs, Vm, config)
        if not np.isfinite(f_new):
            raise LifestyleError(_const.ERROR_CODE.NON_FINITE, f"Objective became {f_new} at iteration {iteration}")
        history.append(f_new)
        if abs(f - f_new) < config.tol * max(abs(f), _TINY):
            converged = True
            break
        f = f_new
    log_info('CMF Fit', 'cmf_fit', rank=r, iterations=len(history) - 1, objective=history[-1],
             converged=converged, norms_s=group_norms(Vs), norms_m=group_norms(Vm))
    return CmfModel(U, Vs, Vm, config, history, s_offset, m_offset, converged)


@_logged_operation()
def predict_shopping(model: CmfModel, M_rows: Array, config: CmfConfig = None) -> Array:
    """Shopping rows for users seen through M only: u = argmin ||m - u Vm^T||^2 + lambda_u ||u||^2, then u Vs^T.

    lambda_u is floored at 1e-8 so the normal matrix is always invertible.
    """
    config = config or model.config
    M_rows = np.atleast_2d(np.asarray(M_rows, dtype=float))
    require(M_rows.shape[1] == model.Vm.shape[0], _const.ERROR_CODE.SHAPE_MISMATCH,
            f"M rows have {M_rows.shape[1]} columns, the model expects {model.Vm.shape[0]}")
    if not M_rows.shape[0]:
        return np.empty((0, model.Vs.shape[0]))
    lam = max(config.lambda_u, _const.RIDGE_FLOOR)
    Vm = model.Vm
    normal = Vm.T @ Vm + lam * np.eye(model.rank)
    U = linalg.solve(normal, Vm.T @ (M_rows - model.m_offset).T, assume_a='pos').T
    predicted = U @ model.Vs.T + model.s_offset
    return np.clip(predicted, 0.0, 1.0) if config.clamp else predicted


def rmse(S_true: Array, S_pred: Array) -> float:
    """sqrt(mean squared difference) over every compared entry."""
    S_true = np.asarray(S_true, dtype=float)
    S_pred = np.asarray(S_pred, dtype=float)
    require(S_true.shape == S_pred.shape, _const.ERROR_CODE.SHAPE_MISMATCH,
            f"Shapes differ: {S_true.shape} vs {S_pred.shape}")
    require(S_true.size > 0, _const.ERROR_CODE.EMPTY_INPUT, "RMSE over zero entries")
    return float(np.sqrt(np.mean((S_true - S_pred) ** 2)))


def folds_of(n: int, folds: int, seed: int) -> List[Array]:
    """Seeded shuffle of 0..n-1 cut into ``folds`` near-equal sorted parts."""
    require(folds >= 2, _const.ERROR_CODE.INVALID_PARAMS, f"folds must be >= 2, got {folds}")
    require(n >= folds, _const.ERROR_CODE.INVALID_PARAMS, f"{n} users cannot fill {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    parts = [np.sort(p) for p in np.array_split(perm, folds)]
    if any(p.size == 0 for p in parts):
        raise LifestyleError(_const.ERROR_CODE.EMPTY_INPUT, "A fold has zero users")
    return parts


def _held_out(S: Array, M: Array, rows: Array, config: CmfConfig) -> Array:
    model = fit(S, M, RowMask.without(rows, S.shape[0]), config)
    return predict_shopping(model, M[rows], config)


@_logged_operation()
def cross_validate(S: Array,
                   M: Array,
                   config: CmfConfig = CmfConfig(),
                   ranks: Iterable[int] = _const.CMF_RANK_GRID,
                   folds: int = _const.CV_FOLDS,
                   seed: int = 0,
                   n_jobs: int = None,
                   ) -> CrossValidation:
    """Held-out-row RMSE per (rank, fold). Every fold hides its users' S rows, fits, and predicts them from M.

    The selected rank has the lowest mean RMSE, ties going to the smaller rank. Fold assignment depends only on
    ``seed``, so every rank sees the same folds.
    """
    S, M, _ = _check(S, M, RowMask.all(np.shape(S)[0]))
    ranks = sorted(set(int(r) for r in ranks))
    require(len(ranks) > 0, _const.ERROR_CODE.INVALID_PARAMS, "Empty rank grid")
    parts = folds_of(S.shape[0], folds, seed)
    tasks = [(r, f) for r in ranks for f in range(len(parts))]
    predictions = Parallel(n_jobs=n_jobs or _state.n_jobs)(
        delayed(_held_out)(S, M, parts[f], config.replace(rank=r)) for r, f in tasks)
    scores = [FoldScore(f, r, rmse(S[parts[f]], pred)) for (r, f), pred in zip(tasks, predictions)]
    mean_rmse = {r: float(np.mean([s.rmse for s in scores if s.rank == r])) for r in ranks}
    selected = min(ranks, key=lambda r: (mean_rmse[r], r))
    log_info('CMF Cross Validation', 'cmf_cv', folds=folds, mean_rmse=mean_rmse, selected_rank=selected)
    return CrossValidation(scores, mean_rmse, selected)


@_logged_operation()
def compare_views(S: Array,
                  M: Array,
                  config: CmfConfig = CmfConfig(),
                  folds: int = _const.CV_FOLDS,
                  seed: int = 0,
                  n_jobs: int = None,
                  ) -> ViewComparison:
    """Joint factorization against the shopping-only arm on the same folds.

    Without M, a user with no S row has nothing to go on, so the shopping-only arm predicts the column means of the
    observed rows. RMSE is pooled over every held-out entry.
    """
    S, M, _ = _check(S, M, RowMask.all(np.shape(S)[0]))
    parts = folds_of(S.shape[0], folds, seed)
    joint = Parallel(n_jobs=n_jobs or _state.n_jobs)(delayed(_held_out)(S, M, rows, config) for rows in parts)
    truth, pred_joint, pred_only = [], [], []
    for rows, pred in zip(parts, joint):
        observed = np.setdiff1d(np.arange(S.shape[0]), rows)
        truth.append(S[rows])
        pred_joint.append(pred)
        pred_only.append(np.repeat(S[observed].mean(axis=0)[None, :], rows.size, axis=0))
    truth = np.vstack(truth)
    rmse_joint = rmse(truth, np.vstack(pred_joint))
    rmse_only = rmse(truth, np.vstack(pred_only))
    change = (rmse_only - rmse_joint) / rmse_only if rmse_only > 0 else 0.0
    log_info('CMF View Comparison', 'cmf_compare', rmse_joint=rmse_joint, rmse_shopping_only=rmse_only,
             relative_change=change)
    return ViewComparison(rmse_joint, rmse_only, float(change))


def private_factors(model: CmfModel, rel_threshold: float = 0.05) -> PrivateFactors:
    """Factors whose loading column is null in one view.

    ``shopping_only`` lists the columns with a Vm norm below rel_threshold times the largest Vm column norm;
    ``mobility_only`` does the same with Vs.
    """
    def null_columns(V):
        norms = group_norms(V)
        top = norms.max() if norms.size else 0.0
        return [int(k) for k in range(norms.size) if top == 0 or norms[k] < rel_threshold * top]

    return PrivateFactors(null_columns(model.Vm), null_columns(model.Vs))


def lifestyle_report(model: CmfModel,
                     behavior_labels: Sequence[str] = None,
                     class_labels: Sequence[str] = None,
                     k: int = 3,
                     ) -> pd.DataFrame:
    """Per latent lifestyle, the k shopping behaviors and k tower classes with the largest loadings.

    :return: DataFrame with columns lifestyle, view, rank, label, loading
    """
    behavior_labels = list(behavior_labels or [f"behavior_{j}" for j in range(model.Vs.shape[0])])
    class_labels = list(class_labels or [f"class_{j}" for j in range(model.Vm.shape[0])])
    rows = []
    for lifestyle in range(model.rank):
        for view, V, labels in (('shopping', model.Vs, behavior_labels), ('mobility', model.Vm, class_labels)):
            column = V[:, lifestyle]
            for rank, j in enumerate(np.argsort(-column, kind='stable')[:k]):
                rows.append((lifestyle, view, rank, labels[j], float(column[j])))
    return pd.DataFrame(rows, columns=['lifestyle', 'view', 'rank', 'label', 'loading'])

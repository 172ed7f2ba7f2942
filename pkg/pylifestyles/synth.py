"""Synthetic lifestyles with known ground truth.

Everything flows from planted factors: the shopping matrix S and the mobility matrix M come from U*, Vs*, Vm*;
tower sites, POIs, call records and card transactions are then sampled so the rest of the pipeline can rebuild
matrices consistent with them.
"""
import dataclasses
from datetime import timedelta
from datetime import timezone
from pathlib import Path

import numpy as np
import pandas as pd

from . import artifacts as _art
from . import const as _const
from .core import _logged_operation
from .core import LifestyleError
from .core import log_info
from .core import require
from .matrix import SparseCountMatrix
from .types import *

UBIQUITOUS_CATEGORIES = ('establishment', 'point_of_interest')


@dataclasses.dataclass(frozen=True)
class SynthConfig:
    n: int = 500
    p: int = 100
    d: int = 20
    K: int = 5
    r: int = 3
    noise_sigma: float = 0.05
    private_factors_s: Tuple[int, ...] = ()
    private_factors_m: Tuple[int, ...] = ()
    seed: int = 0
    side_m: float = 30_000.0
    center: Tuple[float, float] = (19.4326, -99.1332)
    start: str = '2015-03-01'
    days: int = 150
    categories_per_class: int = 5
    mccs_per_behavior: int = 8

    def errors(self) -> List[str]:
        errors = []
        for name in ('n', 'p', 'd', 'K', 'r', 'days', 'categories_per_class', 'mccs_per_behavior'):
            if getattr(self, name) < 1:
                errors.append(f"{name}: must be >= 1, got {getattr(self, name)!r}")
        if self.p < 3:
            errors.append(f"p: need at least 3 towers to triangulate, got {self.p}")
        if self.r > min(self.K, self.d):
            errors.append(f"r: rank {self.r} exceeds min(K, d) = {min(self.K, self.d)}")
        if not self.noise_sigma >= 0:
            errors.append(f"noise_sigma: must be >= 0, got {self.noise_sigma!r}")
        if not self.side_m > 0:
            errors.append(f"side_m: must be > 0, got {self.side_m!r}")
        s, m = set(self.private_factors_s), set(self.private_factors_m)
        if s & m:
            errors.append(f"private_factors: shopping and mobility sets overlap at {sorted(s & m)}")
        if any(not 0 <= k < self.r for k in s | m):
            errors.append(f"private_factors: indices must lie in 0..{self.r - 1}")
        return errors

    def validate(self) -> 'SynthConfig':
        errors = self.errors()
        if errors:
            raise LifestyleError(_const.ERROR_CODE.INVALID_PARAMS, '; '.join(errors))
        return self


class Synthetic:
    """Output of ``generate`` or ``planted_views``. Matrices are dense numpy arrays unless noted."""

    def __init__(self, **fields):
        self.__dict__.update(fields)

    def __repr__(self):
        events = ''
        if hasattr(self, 'towers'):
            events = f", towers={len(self.towers)}, cdr={len(self.cdr_events)}, ccr={len(self.ccr_events)}"
        return f"Synthetic(n={self.S.shape[0]}, K={self.S.shape[1]}, d={self.M.shape[1]}{events})"


def _row_normalize(A: Array) -> Array:
    sums = A.sum(axis=1, keepdims=True)
    uniform = np.full_like(A, 1.0 / A.shape[1])
    return np.where(sums > 0, A / np.where(sums > 0, sums, 1.0), uniform)


def _tower_records(rng, config: SynthConfig) -> Tuple[List[TowerRecord], Array]:
    xy = rng.uniform(-config.side_m / 2, config.side_m / 2, size=(config.p, 2))
    lat0, lon0 = config.center
    lat = lat0 + np.degrees(xy[:, 1] / _const.EARTH_RADIUS_M)
    lon = lon0 + np.degrees(xy[:, 0] / (_const.EARTH_RADIUS_M * np.cos(np.radians(lat0))))
    return [TowerRecord(f"t{j:04d}", float(a), float(o)) for j, (a, o) in enumerate(zip(lat, lon))], xy


def _pois(rng, towers: List[TowerRecord], C: Array, config: SynthConfig) -> Dict[str, List[str]]:
    vocab = [[f"class{c:02d}_place{j}" for j in range(config.categories_per_class)] for c in range(config.d)]
    pois = {}
    for t, record in enumerate(towers):
        count = 10 + rng.poisson(10)
        classes = rng.choice(config.d, size=count, p=C[t])
        picks = rng.integers(config.categories_per_class, size=count)
        pois[record.tower_id] = sorted([vocab[c][j] for c, j in zip(classes, picks)] + list(UBIQUITOUS_CATEGORIES))
    return pois


def _visits(rng, M: Array, C: Array, users: List[str], towers: List[str], start, config: SynthConfig):
    events, triplets = [], []
    for i, user in enumerate(users):
        weight = C @ (M[i] + 0.05)
        n_towers = min(config.p, 1 + rng.poisson(2))
        chosen = np.sort(rng.choice(config.p, size=n_towers, replace=False, p=weight / weight.sum()))
        for j in chosen:
            n_days = min(config.days, 1 + rng.poisson(4))
            days = np.sort(rng.choice(config.days, size=n_days, replace=False))
            triplets.append((user, towers[j], n_days))
            for day in days:
                for second in np.sort(rng.integers(_const.SECONDS_PER_DAY, size=1 + rng.poisson(0.5))):
                    events.append(CdrEvent(user, towers[j], start + timedelta(days=int(day), seconds=int(second))))
    events.sort(key=lambda e: (e.timestamp, e.user_id, e.tower_id))
    row_ids, col_ids, values = zip(*triplets) if triplets else ((), (), ())
    W = SparseCountMatrix.from_triplets(row_ids, col_ids, values, rows=users, cols=towers)
    return events, W


def _transactions(rng, S_clean: Array, users: List[str], start, config: SynthConfig):
    n_mcc = config.K * config.mccs_per_behavior
    mccs = [str(5000 + 37 * j) for j in range(n_mcc)]
    phi = np.full((config.K, n_mcc), 0.1 / n_mcc)
    for k in range(config.K):
        own = slice(k * config.mccs_per_behavior, (k + 1) * config.mccs_per_behavior)
        phi[k, own] += 0.9 / config.mccs_per_behavior
    events = []
    for i, user in enumerate(users):
        count = 20 + rng.poisson(20)
        behaviors = rng.choice(config.K, size=count, p=S_clean[i])
        for z in behaviors:
            mcc = mccs[rng.choice(n_mcc, p=phi[z])]
            amount = round(float(rng.lognormal(3.0 + 0.25 * z, 0.75)), 2)
            when = start + timedelta(seconds=int(rng.integers(config.days * _const.SECONDS_PER_DAY)))
            events.append(CcrEvent(user, mcc, amount, when))
    events.sort(key=lambda e: (e.timestamp, e.user_id, e.mcc))
    return events, phi, mccs


def _factors(rng, config: SynthConfig) -> dict:
    n, K, d, r = config.n, config.K, config.d, config.r
    U = np.abs(rng.standard_normal((n, r)))
    Vs = rng.standard_normal((K, r))
    # every column sums to zero over behaviors
    Vs -= Vs.mean(axis=0)
    Vm = rng.standard_normal((d, r))
    Vs[:, list(config.private_factors_m)] = 0.0
    Vm[:, list(config.private_factors_s)] = 0.0
    S_clean = _row_normalize(np.clip(U @ Vs.T, 0, None))
    # noise goes in after normalization; rows are re-clamped, not re-normalized
    S = np.clip(S_clean + rng.normal(0.0, config.noise_sigma, size=S_clean.shape), 0, None)
    M = np.clip(U @ Vm.T, 0, None)
    return dict(U=U, Vs=Vs, Vm=Vm, S=S, S_clean=S_clean, M=M)


def planted_views(config: SynthConfig = SynthConfig()) -> Synthetic:
    """Only the planted factors and the S, M views, without towers or event logs.

    Draws the same factors and views as ``generate`` for the same config.
    """
    config.validate()
    return Synthetic(config=config, **_factors(np.random.default_rng(config.seed), config))


@_logged_operation()
def generate(config: SynthConfig = SynthConfig()) -> Synthetic:
    """Sample a complete synthetic study from ``config.seed``.

    :raises LifestyleError: INVALID_PARAMS for an infeasible config, eg. r > min(K, d).
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    n, d = config.n, config.d
    factors = _factors(rng, config)
    U, Vs, Vm, S, S_clean, M = (factors[k] for k in ('U', 'Vs', 'Vm', 'S', 'S_clean', 'M'))

    towers, xy = _tower_records(rng, config)
    tower_ids = [t.tower_id for t in towers]
    tower_class = rng.integers(d, size=config.p)
    C = np.full((config.p, d), 0.15 / d)
    C[np.arange(config.p), tower_class] += 0.85
    pois = _pois(rng, towers, C, config)

    users = [f"u{i:05d}" for i in range(n)]
    start = pd.Timestamp(config.start, tz=timezone.utc).to_pydatetime()
    cdr_events, W = _visits(rng, M, C, users, tower_ids, start, config)
    ccr_events, phi, mccs = _transactions(rng, S_clean, users, start, config)
    log_info('Synthetic Data Generated', 'synth', n=n, towers=config.p, cdr=len(cdr_events), ccr=len(ccr_events),
             sparsity=sparsity_report(W))
    return Synthetic(config=config, U=U, Vs=Vs, Vm=Vm, S=S, S_clean=S_clean, M=M, C=C, tower_class=tower_class,
                     towers=towers, xy=xy, pois=pois, users=users, W=W, cdr_events=cdr_events, ccr_events=ccr_events,
                     phi=phi, mccs=mccs)


def sparsity_report(W: Union[SparseCountMatrix, Array]) -> float:
    """Fraction of zero entries."""
    shape = W.shape
    size = shape[0] * shape[1]
    require(size > 0, _const.ERROR_CODE.EMPTY_INPUT, "W is empty")
    nonzero = W.nnz if isinstance(W, SparseCountMatrix) else int(np.count_nonzero(W))
    return 1.0 - nonzero / size


def _stamp(ts) -> str:
    return ts.strftime('%Y-%m-%dT%H:%M:%SZ')


@_logged_operation()
def write_dataset(result: Synthetic, directory: PathLike) -> Dict[str, Path]:
    """Write towers.csv, cdr.csv, ccr.csv, pois.csv and ground_truth.json into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {name: directory / name for name in
             ('towers.csv', 'cdr.csv', 'ccr.csv', 'pois.csv', 'ground_truth.json')}
    _art.write_csv(pd.DataFrame(result.towers, columns=list(_const.TOWER_COLUMNS)), paths['towers.csv'])
    _art.write_csv(pd.DataFrame([(e.user_id, e.tower_id, _stamp(e.timestamp)) for e in result.cdr_events],
                                columns=list(_const.CDR_COLUMNS)), paths['cdr.csv'])
    _art.write_csv(pd.DataFrame([(e.user_id, e.mcc, f"{e.amount:.2f}", _stamp(e.timestamp))
                                 for e in result.ccr_events], columns=list(_const.CCR_COLUMNS)), paths['ccr.csv'])
    _art.write_csv(pd.DataFrame([(t, c) for t, cats in result.pois.items() for c in cats],
                                columns=list(_const.POI_COLUMNS)), paths['pois.csv'])
    _art.write_json(dict(
        config=dataclasses.asdict(result.config), users=result.users, U=result.U, Vs=result.Vs, Vm=result.Vm,
        S=result.S, M=result.M, C=result.C, tower_class=result.tower_class, phi=result.phi, mccs=result.mccs,
        private_factors_s=sorted(result.config.private_factors_s),
        private_factors_m=sorted(result.config.private_factors_m),
    ), paths['ground_truth.json'])
    return paths

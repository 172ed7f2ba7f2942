import math

import numpy as np
import pandas as pd

from . import const as _const
from .core import _logged_operation
from .core import flag
from .core import LifestyleError
from .core import log_info
from .matrix import as_index
from .matrix import SparseCountMatrix
from .types import *

_OVERFLOW = '\x00too many fields'


def _read_rows(stream, columns: Sequence[str]) -> pd.DataFrame:
    """Read a headed CSV as strings, keeping blank and short rows so that row position maps to line number."""
    n = len(columns)

    def overflow(fields):
        return list(fields[:n - 1]) + [_OVERFLOW]

    try:
        frame = pd.read_csv(stream, dtype=str, keep_default_na=False, na_filter=False, skip_blank_lines=False,
                            engine='python', on_bad_lines=overflow, index_col=False)
    except pd.errors.EmptyDataError:
        raise LifestyleError(_const.ERROR_CODE.PARSE_ERROR, f"Empty input, expected header {','.join(columns)}")
    header = [str(c).strip() for c in frame.columns]
    if header != list(columns):
        raise LifestyleError(_const.ERROR_CODE.PARSE_ERROR,
                             f"Bad header {','.join(header)}, expected {','.join(columns)}")
    frame.columns = header
    frame = frame.fillna('')
    return frame.apply(lambda col: col.str.strip())


def _parse_timestamps(column: pd.Series) -> pd.Series:
    # naive timestamps are read as UTC
    ts = pd.to_datetime(column.where(column != ''), utc=True, errors='coerce', format='ISO8601')
    return ts.dt.floor('s')


def _row_errors(frame: pd.DataFrame, reasons: pd.Series) -> List[RowError]:
    bad = reasons[reasons != '']
    # header is line 1
    return [RowError(int(i) + 2, reason, ','.join(frame.loc[i]).replace(_OVERFLOW, '...'))
            for i, reason in bad.items()]


def _first_reason(*checks: Tuple[pd.Series, str]) -> pd.Series:
    reasons = None
    for failed, reason in reversed(checks):
        current = pd.Series(np.where(failed, reason, ''), index=failed.index)
        reasons = current if reasons is None else current.where(current != '', reasons)
    return reasons


@_logged_operation()
def parse_cdr(stream, tower_ids: Iterable[str] = None) -> ParseResult:
    """Parse a call detail record CSV with header ``user_id,tower_id,timestamp``.

    :param stream: Path or file-like object (bytes or text).
    :param tower_ids: The tower registry. When given, rows naming an unknown tower are skipped and counted.
    :return: ParseResult(events, errors, unknown_towers) with events in file order and one RowError per malformed
    row.
    """
    frame = _read_rows(stream, _const.CDR_COLUMNS)
    ts = _parse_timestamps(frame['timestamp'])
    reasons = _first_reason(
        (frame['timestamp'] == _OVERFLOW, 'too many fields'),
        (frame['user_id'] == '', 'missing user_id'),
        (frame['tower_id'] == '', 'missing tower_id'),
        (ts.isna(), 'unparseable timestamp'),
    )
    errors = _row_errors(frame, reasons)
    valid = reasons == ''
    unknown = 0
    if tower_ids is not None:
        known = frame['tower_id'].isin(set(map(str, tower_ids)))
        unknown = int((valid & ~known).sum())
        valid &= known
    events = [CdrEvent(u, t, s) for u, t, s in
              zip(frame.loc[valid, 'user_id'], frame.loc[valid, 'tower_id'], ts[valid])]
    if errors:
        flag(_const.ERROR_CODE.PARSE_ERROR, f'Skipped {len(errors)} malformed CDR rows',
             skipped=len(errors), first_line=errors[0].line)
    if unknown:
        flag(_const.ERROR_CODE.NOT_FOUND, f'Skipped {unknown} CDR rows with unknown tower', skipped=unknown)
    log_info('CDR Parsed', 'parse_cdr', events=len(events), errors=len(errors), unknown_towers=unknown)
    return ParseResult(events, errors, unknown)


@_logged_operation()
def parse_ccr(stream) -> ParseResult:
    """Parse a credit card record CSV with header ``user_id,mcc,amount,timestamp``.

    :param stream: Path or file-like object (bytes or text).
    :return: ParseResult(events, errors, 0).
    """
    frame = _read_rows(stream, _const.CCR_COLUMNS)
    ts = _parse_timestamps(frame['timestamp'])
    amount = pd.to_numeric(frame['amount'], errors='coerce')
    reasons = _first_reason(
        (frame['timestamp'] == _OVERFLOW, 'too many fields'),
        (frame['user_id'] == '', 'missing user_id'),
        (frame['mcc'] == '', 'missing mcc'),
        (~np.isfinite(amount), 'unparseable amount'),
        (amount < 0, 'negative amount'),
        (ts.isna(), 'unparseable timestamp'),
    )
    errors = _row_errors(frame, reasons)
    valid = reasons == ''
    events = [CcrEvent(u, m, float(a), s) for u, m, a, s in
              zip(frame.loc[valid, 'user_id'], frame.loc[valid, 'mcc'], amount[valid], ts[valid])]
    if errors:
        flag(_const.ERROR_CODE.PARSE_ERROR, f'Skipped {len(errors)} malformed CCR rows',
             skipped=len(errors), first_line=errors[0].line)
    log_info('CCR Parsed', 'parse_ccr', events=len(events), errors=len(errors))
    return ParseResult(events, errors, 0)


@_logged_operation()
def load_towers(stream) -> List[TowerRecord]:
    """Read the tower registry ``tower_id,lat,lon``. Duplicate ids keep their first row.

    Malformed registry rows are fatal: every downstream matrix is aligned to this list.
    """
    frame = _read_rows(stream, _const.TOWER_COLUMNS)
    lat = pd.to_numeric(frame['lat'], errors='coerce')
    lon = pd.to_numeric(frame['lon'], errors='coerce')
    reasons = _first_reason(
        (frame['lon'] == _OVERFLOW, 'too many fields'),
        (frame['tower_id'] == '', 'missing tower_id'),
        (~np.isfinite(lat.astype(float)) | ~np.isfinite(lon.astype(float)), 'bad coordinates'),
    )
    errors = _row_errors(frame, reasons)
    if errors:
        e = errors[0]
        raise LifestyleError(_const.ERROR_CODE.PARSE_ERROR,
                             f"{len(errors)} malformed tower rows, first at line {e.line}: {e.reason}")
    duplicated = frame['tower_id'].duplicated()
    if duplicated.any():
        flag(_const.ERROR_CODE.INVALID_PARAMS, f'Dropped {int(duplicated.sum())} duplicate tower ids',
             towers=sorted(set(frame.loc[duplicated, 'tower_id']))[:10])
    keep = ~duplicated
    return [TowerRecord(t, float(a), float(o)) for t, a, o in
            zip(frame.loc[keep, 'tower_id'], lat[keep], lon[keep])]


def _events_frame(events: Iterable, fields: Sequence[str]) -> pd.DataFrame:
    frame = pd.DataFrame(list(events), columns=list(fields))
    if len(frame):
        frame['timestamp'] = pd.to_datetime(frame['timestamp'], utc=True)
    return frame


@_logged_operation()
def build_visit_matrix(events: Iterable[CdrEvent],
                       towers: Iterable[str],
                       users: Iterable[str] = None,
                       ) -> SparseCountMatrix:
    """Count, per (user, tower), the distinct UTC calendar days with at least one call in the tower's cell.

    :param events: Parsed CDR events.
    :param towers: Ordered tower index; must cover every event tower_id.
    :param users: Ordered user index. Defaults to the sorted event user ids.
    :return: W as a SparseCountMatrix (users x towers) of integer day counts.
    """
    frame = _events_frame(events, CdrEvent._fields)
    towers = as_index(towers, 'towers')
    if users is None:
        users = sorted(set(frame['user_id']))
    if not len(frame):
        return SparseCountMatrix.from_triplets([], [], [], rows=users, cols=towers)
    missing = ~frame['tower_id'].isin(towers)
    if missing.any():
        raise LifestyleError(_const.ERROR_CODE.INVALID_PARAMS,
                             f"Tower index does not cover event towers {sorted(set(frame.loc[missing, 'tower_id']))[:5]}")
    frame['day'] = frame['timestamp'].dt.floor('D')
    days = frame[['user_id', 'tower_id', 'day']].drop_duplicates()
    counts = days.groupby(['user_id', 'tower_id'], sort=True).size()
    user_ids, tower_ids = zip(*counts.index) if len(counts) else ((), ())
    return SparseCountMatrix.from_triplets(user_ids, tower_ids, counts.values, rows=users, cols=towers)


def _bucket_tokens(frame: pd.DataFrame, amount_buckets: int) -> pd.Series:
    quantiles = np.arange(1, amount_buckets) / amount_buckets
    buckets = pd.Series(0, index=frame.index, dtype=np.int64)
    for _, group in frame.groupby('mcc', sort=True):
        edges = np.quantile(group['amount'].to_numpy(dtype=float), quantiles)
        idx = np.searchsorted(edges, group['amount'].to_numpy(dtype=float), side='left')
        buckets.loc[group.index] = np.minimum(idx, amount_buckets - 1)
    return frame['mcc'] + _const.AMOUNT_TOKEN_SEP + buckets.astype(str)


def _token_key(token: str):
    mcc, _, bucket = token.partition(_const.AMOUNT_TOKEN_SEP)
    return mcc, int(bucket) if bucket else -1


@_logged_operation()
def build_mcc_documents(events: Iterable[CcrEvent],
                        amount_buckets: int = None,
                        users: Iterable[str] = None,
                        ) -> Tuple[SparseCountMatrix, List[str]]:
    """Turn each user's purchases into a bag of MCC tokens.

    :param events: Parsed CCR events.
    :param amount_buckets: When given, every token becomes ``mcc@bucket`` where bucket indexes the per-MCC
    amount quantiles over the whole corpus. Bucket b holds amounts in (edge b-1, edge b], so an amount equal to
    an edge, and every amount of a single-valued MCC, goes to the lower bucket.
    :param users: Ordered user index. Defaults to the sorted event user ids.
    :return: (counts users x vocabulary, vocabulary)
    """
    if amount_buckets is not None and amount_buckets < 2:
        raise LifestyleError(_const.ERROR_CODE.INVALID_CONFIG, f"amount_buckets must be >= 2, got {amount_buckets}")
    frame = _events_frame(events, CcrEvent._fields)
    if users is None:
        users = sorted(set(frame['user_id']))
    if not len(frame):
        empty = SparseCountMatrix.from_triplets([], [], [], rows=users, cols=[])
        return empty, []
    tokens = frame['mcc'] if amount_buckets is None else _bucket_tokens(frame, amount_buckets)
    vocabulary = sorted(set(tokens), key=_token_key)
    counts = pd.DataFrame({'user_id': frame['user_id'], 'token': tokens}).groupby(['user_id', 'token']).size()
    user_ids, token_ids = zip(*counts.index)
    docs = SparseCountMatrix.from_triplets(user_ids, token_ids, counts.values, rows=users, cols=vocabulary)
    return docs, vocabulary


@_logged_operation()
def average_weekly_spend(events: Iterable[CcrEvent], users: Iterable[str] = None) -> pd.Series:
    """Average amount spent per week over the global observation window.

    weeks = ceil(window days / 7), at least 1, where the window runs from the first to the last transaction of the
    whole corpus. Users without transactions get 0.
    """
    frame = _events_frame(events, CcrEvent._fields)
    if not len(frame):
        raise LifestyleError(_const.ERROR_CODE.EMPTY_INPUT, "No transactions to average")
    window = frame['timestamp'].max() - frame['timestamp'].min()
    days = window.total_seconds() / _const.SECONDS_PER_DAY
    weeks = max(1, math.ceil(days / _const.DAYS_PER_WEEK))
    totals = frame.groupby('user_id')['amount'].sum()
    if users is None:
        users = sorted(set(frame['user_id']))
    users = as_index(users, 'users')
    spend = totals.reindex(users, fill_value=0.0).astype(float) / weeks
    spend.name = 'weekly_spend'
    return spend


class Dataset:
    """Aligned user/tower/MCC indexes with the visit and MCC count matrices built over them."""

    def __init__(self, users: Iterable[str], towers: Iterable[str], mccs: Iterable[str],
                 visit_counts: SparseCountMatrix, mcc_counts: SparseCountMatrix,
                 cdr_events: List[CdrEvent] = None, ccr_events: List[CcrEvent] = None):
        self.users = as_index(users, 'users')
        self.towers = as_index(towers, 'towers')
        self.mccs = as_index(mccs, 'mccs')
        if not (visit_counts.rows.equals(self.users) and visit_counts.cols.equals(self.towers)):
            raise LifestyleError(_const.ERROR_CODE.SHAPE_MISMATCH, "visit_counts is not aligned to users x towers")
        if not (mcc_counts.rows.equals(self.users) and mcc_counts.cols.equals(self.mccs)):
            raise LifestyleError(_const.ERROR_CODE.SHAPE_MISMATCH, "mcc_counts is not aligned to users x mccs")
        if visit_counts.nnz and not np.issubdtype(visit_counts.values.dtype, np.integer):
            raise LifestyleError(_const.ERROR_CODE.INVALID_PARAMS, "visit counts must be integers")
        self.visit_counts = visit_counts
        self.mcc_counts = mcc_counts
        self.cdr_events = cdr_events or []
        self.ccr_events = ccr_events or []

    @property
    def n(self) -> int:
        return len(self.users)

    @property
    def p(self) -> int:
        return len(self.towers)

    def __repr__(self):
        return f"Dataset(n={self.n}, p={self.p}, mccs={len(self.mccs)})"


@_logged_operation()
def build_dataset(cdr_events: List[CdrEvent],
                  ccr_events: List[CcrEvent],
                  tower_ids: Iterable[str],
                  amount_buckets: int = None,
                  ) -> Dataset:
    """Build W and the MCC documents over one user index: the sorted union of ids seen in either log."""
    users = sorted({e.user_id for e in cdr_events} | {e.user_id for e in ccr_events})
    towers = as_index(tower_ids, 'towers')
    visits = build_visit_matrix(cdr_events, towers, users)
    docs, vocabulary = build_mcc_documents(ccr_events, amount_buckets, users)
    log_info('Dataset Built', 'dataset', users=len(users), towers=len(towers), vocabulary=len(vocabulary),
             visit_nnz=visits.nnz, mcc_nnz=docs.nnz)
    return Dataset(users, towers, vocabulary, visits, docs, cdr_events, ccr_events)

import numpy as np
import pandas as pd

from . import const as _const
from .core import _logged_operation
from .core import LifestyleError
from .core import log_info
from .core import require
from .geo import TowerClassMatrix
from .matrix import SparseCountMatrix
from .types import *


class MobilityMatrix:
    """Users x tower classes, M = tfidf(W) C."""

    def __init__(self, M: Array, users: Iterable[str], classes: Iterable[str] = None):
        self.M = np.asarray(M, dtype=float)
        self.users = pd.Index([str(u) for u in users], dtype=object, name='user_id')
        classes = [f"class_{k}" for k in range(self.M.shape[1])] if classes is None else list(classes)
        self.classes = classes
        require(self.M.shape == (len(self.users), len(self.classes)), _const.ERROR_CODE.SHAPE_MISMATCH,
                f"M shape {self.M.shape} does not match ({len(self.users)}, {len(self.classes)})")

    @property
    def d(self) -> int:
        return self.M.shape[1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.M, index=self.users, columns=self.classes)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'MobilityMatrix':
        return cls(frame.to_numpy(dtype=float), frame.index, list(frame.columns))

    def __repr__(self):
        return f"MobilityMatrix(users={len(self.users)}, d={self.d})"


@_logged_operation()
def tfidf(W: SparseCountMatrix) -> SparseCountMatrix:
    """w_ij * ln(n / df_j), df_j the number of users who visited tower j.

    Towers nobody visited are dropped; the retained towers are the columns of the result.
    """
    n = W.shape[0]
    require(n > 0, _const.ERROR_CODE.EMPTY_INPUT, "W has no users")
    values = W.values.tocsc().astype(float)
    df = np.diff(values.indptr)
    retained = np.flatnonzero(df > 0)
    values = values[:, retained]
    idf = np.log(n / df[retained])
    values = values.multiply(idf[None, :]).tocsr()
    if retained.size < W.shape[1]:
        log_info('Unvisited Towers Dropped', 'tfidf_dropped', count=int(W.shape[1] - retained.size),
                 towers=[str(t) for t in W.cols[df == 0][:20]])
    return SparseCountMatrix(values, W.rows, W.cols[retained])


@_logged_operation()
def mobility_matrix(W_weighted: SparseCountMatrix, C: Union[TowerClassMatrix, Array]) -> MobilityMatrix:
    """M = W_weighted C.

    A TowerClassMatrix is aligned to W's columns by tower label; a bare array must already be in column order.
    """
    if isinstance(C, TowerClassMatrix):
        pos = C.towers.get_indexer(W_weighted.cols)
        if (pos < 0).any():
            missing = [str(t) for t in W_weighted.cols[pos < 0][:10]]
            raise LifestyleError(_const.ERROR_CODE.SHAPE_MISMATCH,
                                 f"W has shape {W_weighted.shape} but C of shape {C.C.shape} lacks towers {missing}")
        C_mat, classes = C.C[pos], C.classes
    else:
        C_mat, classes = np.asarray(C, dtype=float), None
        if C_mat.ndim != 2 or C_mat.shape[0] != W_weighted.shape[1]:
            raise LifestyleError(_const.ERROR_CODE.SHAPE_MISMATCH,
                                 f"Cannot multiply W of shape {W_weighted.shape} by C of shape {C_mat.shape}")
    M = np.asarray(W_weighted.values @ C_mat)
    return MobilityMatrix(M, W_weighted.rows, classes)

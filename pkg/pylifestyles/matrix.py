import numpy as np
import pandas as pd
import scipy.sparse as sp

from . import const as _const
from .core import LifestyleError
from .types import *


def as_index(ids: Iterable, name: str = None) -> pd.Index:
    """Build an ordered label index and check it is a bijection onto 0..len-1."""
    index = ids if isinstance(ids, pd.Index) else pd.Index([str(i) for i in ids], dtype=object, name=name)
    if not index.is_unique:
        dupes = sorted(set(index[index.duplicated()]))[:5]
        raise LifestyleError(_const.ERROR_CODE.INVALID_PARAMS, f"Index '{name}' has duplicate labels: {dupes}")
    return index


class SparseCountMatrix:
    """Row- and column-labeled sparse matrix with nonnegative entries.

    Holds W (users x towers), the MCC documents (users x tokens) and the POI documents (towers x categories).
    TF-IDF output keeps the same shape contract with float values.
    """

    def __init__(self, values, rows: Iterable, cols: Iterable):
        self.rows = as_index(rows, 'rows')
        self.cols = as_index(cols, 'cols')
        values = sp.csr_matrix(values)
        if values.shape != (len(self.rows), len(self.cols)):
            raise LifestyleError(_const.ERROR_CODE.SHAPE_MISMATCH,
                                 f"values shape {values.shape} does not match labels "
                                 f"({len(self.rows)}, {len(self.cols)})")
        values.sum_duplicates()
        values.eliminate_zeros()
        if values.nnz and values.data.min() < 0:
            raise LifestyleError(_const.ERROR_CODE.INVALID_PARAMS, "SparseCountMatrix entries must be >= 0")
        self.values = values

    @classmethod
    def from_triplets(cls, row_ids: Sequence, col_ids: Sequence, values: Sequence,
                      rows: Iterable = None, cols: Iterable = None, dtype=np.int64) -> 'SparseCountMatrix':
        """Assemble from (row label, col label, value) triplets. Duplicate pairs are summed.

        :param rows: Row labels in order. Defaults to the sorted unique row labels.
        :param cols: Column labels in order. Defaults to the sorted unique column labels.
        """
        row_ids = np.asarray([str(r) for r in row_ids], dtype=object)
        col_ids = np.asarray([str(c) for c in col_ids], dtype=object)
        rows = as_index(sorted(set(row_ids)) if rows is None else rows, 'rows')
        cols = as_index(sorted(set(col_ids)) if cols is None else cols, 'cols')
        r = rows.get_indexer(row_ids)
        c = cols.get_indexer(col_ids)
        if (r < 0).any() or (c < 0).any():
            raise LifestyleError(_const.ERROR_CODE.INVALID_PARAMS, "Triplet labels fall outside the given index")
        coo = sp.coo_matrix((np.asarray(values, dtype=dtype), (r, c)), shape=(len(rows), len(cols)))
        return cls(coo.tocsr(), rows, cols)

    def to_triplets(self) -> pd.DataFrame:
        coo = self.values.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return pd.DataFrame({
            'row_id': self.rows.values[coo.row[order]],
            'col_id': self.cols.values[coo.col[order]],
            'value' : coo.data[order],
        }, columns=list(_const.TRIPLET_COLUMNS))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def nnz(self) -> int:
        return self.values.nnz

    def total(self):
        return self.values.sum()

    def row_sums(self) -> Array:
        return np.asarray(self.values.sum(axis=1)).ravel()

    def toarray(self) -> Array:
        return self.values.toarray()

    def take_rows(self, rows: Union[Sequence[int], Array]) -> 'SparseCountMatrix':
        rows = np.asarray(rows, dtype=np.int64)
        return SparseCountMatrix(self.values[rows], self.rows[rows], self.cols)

    def take_cols(self, cols: Union[Sequence[int], Array]) -> 'SparseCountMatrix':
        cols = np.asarray(cols, dtype=np.int64)
        return SparseCountMatrix(self.values[:, cols], self.rows, self.cols[cols])

    def __eq__(self, other):
        if not isinstance(other, SparseCountMatrix):
            return NotImplemented
        return (self.rows.equals(other.rows) and self.cols.equals(other.cols)
                and self.shape == other.shape and (self.values != other.values).nnz == 0)

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape}, nnz={self.nnz})"

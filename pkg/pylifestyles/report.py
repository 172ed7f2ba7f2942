import pandas as pd

from . import cmf as _cmf
from . import const as _const
from . import lda as _lda
from .core import _logged_operation
from .types import *


@_logged_operation()
def top_word_tables(model: _lda.TopicModel, k: int = _const.TOP_K, prefix: str = 'topic') -> pd.DataFrame:
    """Ranked words per topic: columns topic, rank, word, weight.

    Topics with fewer than k words in the vocabulary list all of them.
    """
    rows = []
    for topic in range(model.K):
        for rank, (word, weight) in enumerate(_lda.top_words(model, topic, k)):
            rows.append((f"{prefix}_{topic}", rank, word, weight))
    return pd.DataFrame(rows, columns=['topic', 'rank', 'word', 'weight'])


@_logged_operation()
def lifestyle_tables(model: _cmf.CmfModel,
                     behavior_labels: Sequence[str] = None,
                     class_labels: Sequence[str] = None,
                     k: int = 3,
                     rel_threshold: float = 0.05,
                     ) -> pd.DataFrame:
    """Lifestyle loadings with each lifestyle's column norms and whether it is private to one view."""
    table = _cmf.lifestyle_report(model, behavior_labels, class_labels, k)
    private = _cmf.private_factors(model, rel_threshold)
    norms_s, norms_m = _cmf.group_norms(model.Vs), _cmf.group_norms(model.Vm)

    def scope(lifestyle: int) -> str:
        if lifestyle in private.shopping_only:
            return 'shopping_only'
        if lifestyle in private.mobility_only:
            return 'mobility_only'
        return 'shared'

    table['scope'] = table['lifestyle'].map(scope)
    table['norm'] = [norms_s[l] if v == 'shopping' else norms_m[l] for l, v in zip(table['lifestyle'], table['view'])]
    return table

import os
from collections import namedtuple
from datetime import datetime

from typing import Any
from typing import Callable
from typing import Dict
from typing import Iterable
from typing import List
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

import numpy

# raw events
CdrEvent = namedtuple("CdrEvent", "user_id, tower_id, timestamp")
CcrEvent = namedtuple("CcrEvent", "user_id, mcc, amount, timestamp")
RowError = namedtuple("RowError", "line, reason, raw")
ParseResult = namedtuple("ParseResult", "events, errors, unknown_towers")
TowerRecord = namedtuple("TowerRecord", "tower_id, lat, lon")
# geometry
TowerSite = namedtuple("TowerSite", "tower_id, x, y")
# evaluation rows
FoldScore = namedtuple("FoldScore", "fold, rank, rmse")
CrossValidation = namedtuple("CrossValidation", "scores, mean_rmse, selected_rank")
ViewComparison = namedtuple("ViewComparison", "rmse_joint, rmse_shopping_only, relative_change")
LassoRow = namedtuple("LassoRow", "lam, r2_train, r2_test, nnz")
AccuracyRow = namedtuple("AccuracyRow", "classifier, fold, accuracy")
ClassificationReport = namedtuple("ClassificationReport", "rows, majority_frequency, flags")
PrivateFactors = namedtuple("PrivateFactors", "shopping_only, mobility_only")

Array = numpy.ndarray
PathLike = Union[str, os.PathLike]
Timestamp = datetime

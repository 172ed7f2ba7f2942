"""Stage artifacts on disk: CSV and JSON writers with stable formatting, and the per-stage manifests.

Every writer is deterministic for equal inputs, so a re-run stage hashes to the same manifest.
"""
import json
from pathlib import Path

import pandas as pd

from . import const as _const
from . import helpers as _h
from .core import LifestyleError
from .matrix import SparseCountMatrix
from .types import *

FLOAT_FORMAT = '%.17g'
MANIFEST = 'manifest.json'


def write_csv(frame: pd.DataFrame, path: PathLike, index: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=index, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def read_csv(path: PathLike, **kwargs) -> pd.DataFrame:
    try:
        return pd.read_csv(path, **kwargs)
    except FileNotFoundError:
        raise LifestyleError(_const.ERROR_CODE.NOT_FOUND, f"Missing artifact {path}")


def write_dense(frame: pd.DataFrame, path: PathLike) -> Path:
    """Labeled dense matrix, eg. ``tower_id,class_0..class_{d-1}``."""
    return write_csv(frame, path, index=True)


def read_dense(path: PathLike) -> pd.DataFrame:
    frame = read_csv(path, dtype=str, keep_default_na=False)
    frame = frame.set_index(frame.columns[0])
    return frame.astype(float)


def write_triplets(matrix: SparseCountMatrix, path: PathLike) -> Path:
    """``row_id,col_id,value`` triplets, plus the full row and column indexes in ``<stem>.index.json``."""
    path = Path(path)
    write_csv(matrix.to_triplets(), path)
    write_json(dict(rows=list(matrix.rows), cols=list(matrix.cols)), path.with_suffix('.index.json'))
    return path


def read_triplets(path: PathLike, dtype=None) -> SparseCountMatrix:
    path = Path(path)
    frame = read_csv(path, dtype={'row_id': str, 'col_id': str}, keep_default_na=False)
    index = read_json(path.with_suffix('.index.json'))
    if dtype is None:
        dtype = frame['value'].dtype if len(frame) else 'int64'
    return SparseCountMatrix.from_triplets(frame['row_id'], frame['col_id'], frame['value'].to_numpy(dtype=dtype),
                                           rows=index['rows'], cols=index['cols'], dtype=dtype)


def write_json(obj, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_h.make_native(obj), sort_keys=True, indent=1) + '\n')
    return path


def read_json(path: PathLike):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise LifestyleError(_const.ERROR_CODE.NOT_FOUND, f"Missing artifact {path}")


def stage_dir(out: PathLike, stage: Union[_const.STAGE, str]) -> Path:
    return Path(out) / _const.STAGE(stage).value


def require_stage(out: PathLike, stage: Union[_const.STAGE, str], needed_by: str = None) -> Path:
    """Directory of a finished upstream stage; NOT_FOUND naming that stage when its manifest is missing."""
    stage = _const.STAGE(stage)
    directory = stage_dir(out, stage)
    if not (directory / MANIFEST).is_file():
        who = f" by '{needed_by}'" if needed_by else ''
        raise LifestyleError(_const.ERROR_CODE.NOT_FOUND,
                             f"Stage '{stage.value}' output required{who} is missing under {directory}; "
                             f"run the '{stage.value}' stage first")
    return directory


def _relative(path: Path, root: Path) -> str:
    try:
        return path.resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return path.resolve().as_posix()


def write_manifest(out: PathLike,
                   stage: Union[_const.STAGE, str],
                   config_hash: str,
                   seed: int,
                   inputs: Iterable[PathLike],
                   outputs: Iterable[PathLike],
                   ) -> Path:
    """``{stage, config_hash, seed, inputs: {path: sha256}, outputs: {path: sha256}}`` with paths relative to out.

    Inputs are the upstream outputs, so manifests chain by hash.
    """
    root = Path(out)
    manifest = dict(
        stage=_const.STAGE(stage).value,
        config_hash=config_hash,
        seed=int(seed),
        inputs={_relative(Path(p), root): _h.sha256_file(p) for p in inputs},
        outputs={_relative(Path(p), root): _h.sha256_file(p) for p in outputs},
    )
    return write_json(manifest, stage_dir(out, stage) / MANIFEST)


def read_manifest(out: PathLike, stage: Union[_const.STAGE, str]) -> dict:
    return read_json(stage_dir(out, stage) / MANIFEST)


def stage_outputs(out: PathLike, stage: Union[_const.STAGE, str]) -> List[Path]:
    """Every output recorded in a stage's manifest."""
    return [Path(out) / p for p in sorted(read_manifest(out, stage)['outputs'])]

"""Command line pipeline: one subcommand per stage, artifacts under ``<out>/<stage>/``.

    python -m pylifestyles synth --out runs/a
    python -m pylifestyles ingest --out runs/a --data-dir runs/a/synth
    python -m pylifestyles lda-shopping --out runs/a
    ...
"""
import argparse
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import artifacts as _art
from . import baselines as _baselines
from . import cmf as _cmf
from . import const as _const
from . import features as _features
from . import geo as _geo
from . import ingest as _ingest
from . import lda as _lda
from . import poi as _poi
from . import report as _report
from . import synth as _synth
from .config import Config
from .context import session
from .core import LifestyleError
from .core import log_info
from .log import LOG_LEVELS
from .log import get_logger
from .types import *

STAGE = _const.STAGE
TRAIN, INFER, NONE = 'train', 'infer', 'none'


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(_const.EXIT_CODE.USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog='pylifestyles', description='Shopping and mobility lifestyle pipeline')
    sub = parser.add_subparsers(dest='stage', metavar='STAGE', required=True)
    for stage in STAGE:
        p = sub.add_parser(stage.value, help=_STAGE_HELP[stage])
        p.add_argument('--config', type=Path, default=None, help='JSON config file (defaults apply when omitted)')
        p.add_argument('--seed', type=int, default=None, help='Override the root seed')
        p.add_argument('--out', type=Path, default=Path('out'), help='Artifact root directory')
        p.add_argument('--top-k', type=int, default=_const.TOP_K, help='Rows per topic in report tables')
        p.add_argument('--data-dir', type=Path, default=None,
                       help='Directory holding cdr.csv, ccr.csv, towers.csv and pois.csv; overrides the data section')
        p.add_argument('--log-file', type=Path, default=None, help='Log to this file instead of stderr')
        p.add_argument('--log-level', default='INFO', choices=LOG_LEVELS)
    return parser


def _data_paths(config: Config, data_dir: Optional[Path]) -> Dict[str, Path]:
    names = ('cdr', 'ccr', 'towers', 'pois')
    if data_dir is not None:
        return {k: data_dir / f"{k}.csv" for k in names}
    return {k: Path(getattr(config.data, k)) for k in names}


def _require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise LifestyleError(_const.ERROR_CODE.NOT_FOUND, f"{what} not found at {path}")
    return path


def _upstream(out: Path, stage: STAGE) -> Dict[STAGE, Path]:
    return {s: _art.require_stage(out, s, stage.value) for s in _const.STAGE_REQUIRES[stage]}


def _upstream_outputs(out: Path, stage: STAGE) -> List[Path]:
    return [p for s in _const.STAGE_REQUIRES[stage] for p in _art.stage_outputs(out, s)]


def _read_split(directory: Path) -> pd.Series:
    split = _art.read_csv(directory / 'split.csv', dtype=str, keep_default_na=False)
    return split.set_index('user_id')['role']


def _observed_views(out: Path) -> Tuple[pd.DataFrame, pd.DataFrame, Array]:
    """S and M aligned on the user index, and the positions of users with transactions."""
    S = _art.read_dense(_art.stage_dir(out, STAGE.LDA_SHOPPING) / 'S.csv')
    M = _art.read_dense(_art.stage_dir(out, STAGE.FEATURES) / 'M.csv')
    if not S.index.equals(M.index):
        raise LifestyleError(_const.ERROR_CODE.SHAPE_MISMATCH, "S and M are indexed by different users")
    role = _read_split(_art.stage_dir(out, STAGE.LDA_SHOPPING)).reindex(S.index)
    return S, M, np.flatnonzero((role != NONE).to_numpy())


# stages ---------------------------------------------------------------------------------------------------------------
# each returns (inputs, outputs)

def _run_synth(config: Config, args, seed: int):
    result = _synth.generate(config.synth.synth_config(seed))
    paths = _synth.write_dataset(result, _art.stage_dir(args.out, STAGE.SYNTH))
    log_info('Synthetic Sparsity', 'synth_sparsity', sparsity=_synth.sparsity_report(result.W))
    return [], list(paths.values())


def _run_ingest(config: Config, args, seed: int):
    paths = _data_paths(config, args.data_dir)
    for name, path in paths.items():
        if name != 'pois':
            _require_file(path, f"{name} input")
    towers = _ingest.load_towers(paths['towers'])
    tower_ids = [t.tower_id for t in towers]
    cdr = _ingest.parse_cdr(paths['cdr'], tower_ids)
    ccr = _ingest.parse_ccr(paths['ccr'])
    dataset = _ingest.build_dataset(cdr.events, ccr.events, tower_ids, config.data.amount_buckets)
    directory = _art.stage_dir(args.out, STAGE.INGEST)
    errors = pd.DataFrame([('cdr',) + tuple(e) for e in cdr.errors] + [('ccr',) + tuple(e) for e in ccr.errors],
                          columns=['source', 'line', 'reason', 'raw'])
    spend = _ingest.average_weekly_spend(ccr.events, dataset.users) if ccr.events \
        else pd.Series(0.0, index=dataset.users, name='weekly_spend')
    outputs = [
        _art.write_triplets(dataset.visit_counts, directory / 'W.csv'),
        _art.write_triplets(dataset.mcc_counts, directory / 'mcc_docs.csv'),
        _art.write_csv(pd.DataFrame(towers, columns=list(_const.TOWER_COLUMNS)), directory / 'towers.csv'),
        _art.write_csv(spend.rename_axis('user_id').reset_index(), directory / 'weekly_spend.csv'),
        _art.write_csv(errors, directory / 'parse_errors.csv'),
    ]
    inputs = [p for name, p in paths.items() if name != 'pois']
    outputs.extend(p.with_suffix('.index.json') for p in outputs[:2])
    return inputs, outputs


def _run_lda_shopping(config: Config, args, seed: int):
    ingest_dir = _art.stage_dir(args.out, STAGE.INGEST)
    docs = _art.read_triplets(ingest_dir / 'mcc_docs.csv', dtype=np.int64)
    lengths = docs.row_sums()
    active = np.flatnonzero(lengths > 0)
    if active.size < 2:
        raise LifestyleError(_const.ERROR_CODE.EMPTY_INPUT, "Fewer than 2 users have transactions")
    train_pos, infer_pos = _lda.split_users(active.size, config.lda.train_fraction, seed)
    train_rows, infer_rows = active[train_pos], active[infer_pos]
    model = _lda.train(docs.take_rows(train_rows), config.lda.behaviors, alpha=config.lda.alpha,
                       beta=config.lda.beta, iterations=config.lda.iterations, seed=seed)
    # users without transactions get the uniform fold-in row of an empty document
    others = np.setdiff1d(np.arange(docs.shape[0]), train_rows)
    theta = np.empty((docs.shape[0], model.K))
    theta[train_rows] = model.theta
    if others.size:
        theta[others] = _lda.infer(model, docs.take_rows(others), iterations=config.lda.infer_iterations,
                                   seed=seed)
    role = np.full(docs.shape[0], NONE, dtype=object)
    role[train_rows], role[infer_rows] = TRAIN, INFER
    directory = _art.stage_dir(args.out, STAGE.LDA_SHOPPING)
    behaviors = [f"behavior_{k}" for k in range(model.K)]
    outputs = [
        _art.write_dense(pd.DataFrame(theta, index=pd.Index(docs.rows, name='user_id'), columns=behaviors),
                         directory / 'S.csv'),
        _art.write_csv(pd.DataFrame({'user_id': docs.rows, 'role': role}), directory / 'split.csv'),
        _art.write_json(model.to_dict(), directory / 'shopping_model.json'),
    ]
    if config.lda.perplexity_grid:
        table = _lda.perplexity_sweep(docs.take_rows(train_rows), docs.take_rows(infer_rows),
                                      config.lda.perplexity_grid, alpha=config.lda.alpha, beta=config.lda.beta,
                                      iterations=config.lda.iterations,
                                      infer_iterations=config.lda.infer_iterations, seed=seed)
        outputs.append(_art.write_csv(pd.DataFrame(table, columns=['K', 'perplexity']),
                                      directory / 'perplexity.csv'))
    return _upstream_outputs(args.out, STAGE.LDA_SHOPPING), outputs


def _provider(config: Config, data_pois: Path, towers: List[TowerRecord]) -> _poi.PoiProvider:
    geo = config.geo
    if geo.provider == 'http':
        return _poi.HttpPoiProvider(geo.url_template, {t.tower_id: (t.lat, t.lon) for t in towers},
                                    api_key_env=geo.api_key_env, rate_limit=geo.rate_limit,
                                    max_retries=geo.max_retries, backoff_base=geo.backoff_base)
    return _poi.FilePoiProvider(_require_file(data_pois, 'POI fixture'))


def _run_towers(config: Config, args, seed: int):
    ingest_dir = _art.stage_dir(args.out, STAGE.INGEST)
    frame = _art.read_csv(ingest_dir / 'towers.csv', dtype={'tower_id': str}, keep_default_na=False)
    towers = [TowerRecord(t, float(a), float(o)) for t, a, o in zip(frame['tower_id'], frame['lat'], frame['lon'])]
    sites = _geo.tower_sites(towers)
    triangulation = _geo.delaunay(sites)
    radii = _geo.crawl_radii(triangulation)
    pois_path = _data_paths(config, args.data_dir)['pois']
    provider = _provider(config, pois_path, towers)
    pois = _poi.fetch_all_pois(provider, triangulation, radii, n_jobs=config.geo.n_jobs)
    docs = _geo.poi_documents(pois, [t.tower_id for t in towers])
    _, filtered = _geo.filter_frequent_categories(docs, config.geo.threshold)
    classes = _geo.tower_classes(filtered, config.geo.classes, beta=config.lda.beta,
                                 iterations=config.geo.iterations, seed=seed)
    ids = triangulation.tower_ids
    directory = _art.stage_dir(args.out, STAGE.TOWERS)
    outputs = [
        _art.write_dense(classes.to_frame(), directory / 'tower_classes.csv'),
        _art.write_json(classes.model.to_dict(), directory / 'class_model.json'),
        _art.write_csv(pd.DataFrame(sorted((ids[u], ids[v]) for u, v in triangulation.edges),
                                    columns=['tower_a', 'tower_b']), directory / 'delaunay_edges.csv'),
        _art.write_csv(pd.DataFrame(sorted(radii.items()), columns=['tower_id', 'radius_m']),
                       directory / 'crawl_radius.csv'),
        _art.write_json(dict(sorted(triangulation.aliases.items())), directory / 'aliases.json'),
    ]
    inputs = _upstream_outputs(args.out, STAGE.TOWERS)
    if config.geo.provider == 'file':
        inputs.append(pois_path)
    return inputs, outputs


def _run_features(config: Config, args, seed: int):
    W = _art.read_triplets(_art.stage_dir(args.out, STAGE.INGEST) / 'W.csv', dtype=np.int64)
    C = _geo.TowerClassMatrix.from_frame(_art.read_dense(_art.stage_dir(args.out, STAGE.TOWERS) /
                                                         'tower_classes.csv'))
    weighted = _features.tfidf(W)
    M = _features.mobility_matrix(weighted, C)
    directory = _art.stage_dir(args.out, STAGE.FEATURES)
    outputs = [
        _art.write_dense(M.to_frame(), directory / 'M.csv'),
        _art.write_triplets(weighted, directory / 'W_tfidf.csv'),
    ]
    outputs.append(outputs[1].with_suffix('.index.json'))
    return _upstream_outputs(args.out, STAGE.FEATURES), outputs


def _run_cmf_fit(config: Config, args, seed: int):
    S, M, observed = _observed_views(args.out)
    cmf_config = config.cmf.model_config(seed)
    model = _cmf.fit(S.to_numpy(), M.to_numpy(), _cmf.RowMask(observed, len(S)), cmf_config)
    unobserved = np.setdiff1d(np.arange(len(S)), observed)
    predicted = _cmf.predict_shopping(model, M.to_numpy()[unobserved], cmf_config)
    private = _cmf.private_factors(model, config.cmf.private_threshold)
    directory = _art.stage_dir(args.out, STAGE.CMF_FIT)
    model_path = directory / 'cmf_model.json'
    model_path.parent.mkdir(parents=True, exist_ok=True)
    _cmf.save(model, model_path)
    outputs = [
        model_path,
        _art.write_dense(pd.DataFrame(predicted, index=pd.Index(S.index[unobserved], name='user_id'),
                                      columns=S.columns), directory / 'predicted_S.csv'),
        _art.write_json(dict(shopping_only=private.shopping_only, mobility_only=private.mobility_only,
                             norms_s=_cmf.group_norms(model.Vs), norms_m=_cmf.group_norms(model.Vm)),
                        directory / 'private_factors.json'),
    ]
    return _upstream_outputs(args.out, STAGE.CMF_FIT), outputs


def _run_cmf_cv(config: Config, args, seed: int):
    S, M, observed = _observed_views(args.out)
    cv = _cmf.cross_validate(S.to_numpy()[observed], M.to_numpy()[observed], config.cmf.model_config(seed),
                             ranks=config.cmf.rank_grid, folds=config.cmf.folds, seed=seed, n_jobs=config.cmf.n_jobs)
    directory = _art.stage_dir(args.out, STAGE.CMF_CV)
    outputs = [
        _art.write_csv(pd.DataFrame(cv.scores, columns=list(FoldScore._fields)), directory / 'cv.csv'),
        _art.write_json(dict(mean_rmse=cv.mean_rmse, selected_rank=cv.selected_rank), directory / 'cv_summary.json'),
    ]
    return _upstream_outputs(args.out, STAGE.CMF_CV), outputs


def _run_compare_views(config: Config, args, seed: int):
    S, M, observed = _observed_views(args.out)
    result = _cmf.compare_views(S.to_numpy()[observed], M.to_numpy()[observed], config.cmf.model_config(seed),
                                folds=config.cmf.folds, seed=seed, n_jobs=config.cmf.n_jobs)
    path = _art.write_json(result._asdict(), _art.stage_dir(args.out, STAGE.COMPARE_VIEWS) / 'compare_views.json')
    return _upstream_outputs(args.out, STAGE.COMPARE_VIEWS), [path]


def _run_baselines(config: Config, args, seed: int):
    ingest_dir = _art.stage_dir(args.out, STAGE.INGEST)
    W = _art.read_triplets(ingest_dir / 'W.csv', dtype=np.int64)
    spend = _art.read_csv(ingest_dir / 'weekly_spend.csv', dtype={'user_id': str}).set_index('user_id')
    S = _art.read_dense(_art.stage_dir(args.out, STAGE.LDA_SHOPPING) / 'S.csv')
    role = _read_split(_art.stage_dir(args.out, STAGE.LDA_SHOPPING)).reindex(W.rows)
    observed = np.flatnonzero((role != NONE).to_numpy())
    X = W.take_rows(observed)
    users = W.rows[observed]
    section = config.baselines
    lasso = _baselines.lasso_regression(X, spend['weekly_spend'].reindex(users).to_numpy(), section.lambda_grid,
                                        folds=section.folds, seed=seed)
    labels = _baselines.primary_behavior(S.reindex(users).to_numpy())
    report = _baselines.classify_primary(X, labels, folds=section.folds, seed=seed, C_grid=section.C_grid)
    directory = _art.stage_dir(args.out, STAGE.BASELINES)
    outputs = [
        _art.write_csv(pd.DataFrame(lasso, columns=['lambda', 'r2_train', 'r2_test', 'nnz']), directory / 'lasso.csv'),
        _art.write_csv(pd.DataFrame(report.rows, columns=list(AccuracyRow._fields)),
                       directory / 'classification.csv'),
        _art.write_json(dict(majority_frequency=report.majority_frequency, flags=report.flags),
                        directory / 'classification_summary.json'),
    ]
    return _upstream_outputs(args.out, STAGE.BASELINES), outputs


def _run_report(config: Config, args, seed: int):
    shopping = _lda.TopicModel.from_dict(_art.read_json(_art.stage_dir(args.out, STAGE.LDA_SHOPPING) /
                                                        'shopping_model.json'))
    classes = _lda.TopicModel.from_dict(_art.read_json(_art.stage_dir(args.out, STAGE.TOWERS) / 'class_model.json'))
    model = _cmf.load(_art.stage_dir(args.out, STAGE.CMF_FIT) / 'cmf_model.json')
    directory = _art.stage_dir(args.out, STAGE.REPORT)
    behaviors = [f"behavior_{k}" for k in range(shopping.K)]
    class_labels = [f"class_{k}" for k in range(classes.K)]
    outputs = [
        _art.write_csv(_report.top_word_tables(shopping, args.top_k, prefix='behavior'),
                       directory / 'behaviors_top_words.csv'),
        _art.write_csv(_report.top_word_tables(classes, args.top_k, prefix='class'),
                       directory / 'classes_top_words.csv'),
        _art.write_csv(_report.lifestyle_tables(model, behaviors, class_labels, config.cmf.lifestyle_top_k,
                                                config.cmf.private_threshold), directory / 'lifestyles.csv'),
    ]
    return _upstream_outputs(args.out, STAGE.REPORT), outputs


_STAGES = {
    STAGE.SYNTH        : _run_synth,
    STAGE.INGEST       : _run_ingest,
    STAGE.LDA_SHOPPING : _run_lda_shopping,
    STAGE.TOWERS       : _run_towers,
    STAGE.FEATURES     : _run_features,
    STAGE.CMF_FIT      : _run_cmf_fit,
    STAGE.CMF_CV       : _run_cmf_cv,
    STAGE.COMPARE_VIEWS: _run_compare_views,
    STAGE.BASELINES    : _run_baselines,
    STAGE.REPORT       : _run_report,
}

_STAGE_HELP = {
    STAGE.SYNTH        : 'Generate a synthetic study with ground truth',
    STAGE.INGEST       : 'Parse call and card records into count matrices',
    STAGE.LDA_SHOPPING : 'Shopping behaviors by LDA over MCC documents',
    STAGE.TOWERS       : 'Delaunay neighbors, POIs and tower classes',
    STAGE.FEATURES     : 'TF-IDF visits projected onto tower classes',
    STAGE.CMF_FIT      : 'Fit the collective factorization',
    STAGE.CMF_CV       : 'Cross-validate the factorization rank',
    STAGE.COMPARE_VIEWS: 'Joint model against the shopping-only arm',
    STAGE.BASELINES    : 'Lasso and classification baselines on raw counts',
    STAGE.REPORT       : 'Top-word and lifestyle tables',
}


def run(stage: Union[STAGE, str], config: Config, args: argparse.Namespace) -> Path:
    """Run one stage and write its manifest. Returns the manifest path."""
    stage = STAGE(stage)
    _upstream(args.out, stage)
    seed = config.seed_for(stage.value)
    inputs, outputs = _STAGES[stage](config, args, seed)
    manifest = _art.write_manifest(args.out, stage, config.digest(), seed, inputs, outputs)
    log_info(f'Stage Complete: {stage.value}', 'stage_complete', stage=stage.value, outputs=len(outputs))
    return manifest


def main(argv: Sequence[str] = None) -> int:
    args = build_parser().parse_args(argv)
    logger = get_logger(args.log_file, args.log_level, time_utc=True)
    try:
        config = Config.load(args.config).with_seed(args.seed)
    except LifestyleError as e:
        print(f"config error: {e}", file=sys.stderr)
        return _const.EXIT_CODE.USAGE
    try:
        with session(logger=logger, label=args.stage, n_jobs=config.cmf.n_jobs):
            run(args.stage, config, args)
    except LifestyleError as e:
        print(f"{args.stage} failed: {e}", file=sys.stderr)
        if e.error_code == _const.ERROR_CODE.INVALID_CONFIG:
            return _const.EXIT_CODE.USAGE
        return _const.EXIT_CODE.RUNTIME
    return _const.EXIT_CODE.SUCCESS

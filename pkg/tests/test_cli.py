import json

import pandas as pd
import pytest

from .context import pylifestyles as pls
from pylifestyles import artifacts
from pylifestyles.cli import main
from pylifestyles.state import global_state as state

SMALL = {
    'seed'     : 4,
    'synth'    : {'n': 40, 'p': 12, 'd': 3, 'K': 3, 'r': 2, 'days': 20},
    'lda'      : {'behaviors': 3, 'iterations': 60, 'infer_iterations': 20},
    'geo'      : {'classes': 3, 'iterations': 60, 'threshold': 0.9},
    'cmf'      : {'rank': 2, 'rank_grid': [1, 2], 'folds': 3, 'max_iter': 30},
    'baselines': {'lambda_grid': [1.0, 0.01], 'folds': 3},
}
PIPELINE = ['synth', 'ingest', 'lda-shopping', 'towers', 'features', 'cmf-fit', 'cmf-cv', 'compare-views',
            'baselines', 'report']


@pytest.fixture(autouse=True)
def default_state():
    state.set_defaults()
    yield
    state.set_defaults()


def write_config(directory, raw=None):
    path = directory / 'config.json'
    path.write_text(json.dumps(SMALL if raw is None else raw))
    return path


def run_stage(stage, out, config, *extra):
    args = [stage, '--out', str(out), '--config', str(config), *extra]
    if stage in ('ingest', 'towers'):
        args += ['--data-dir', str(out / 'synth')]
    return main(args)


@pytest.fixture(scope='module')
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp('cli')
    config = write_config(root)
    out = root / 'out'
    codes = {stage: run_stage(stage, out, config) for stage in PIPELINE}
    return out, config, codes


def test_every_stage_succeeds_and_writes_a_manifest(pipeline):
    out, _, codes = pipeline
    assert codes == {stage: pls.EXIT_CODE.SUCCESS for stage in PIPELINE}
    for stage in PIPELINE:
        manifest = artifacts.read_manifest(out, stage)
        assert manifest['stage'] == stage
        assert manifest['outputs']
        assert all((out / p).is_file() for p in manifest['outputs'])


def test_manifests_chain_upstream_outputs(pipeline):
    out, _, _ = pipeline
    features = artifacts.read_manifest(out, 'features')
    towers = artifacts.read_manifest(out, 'towers')
    for path, digest in towers['outputs'].items():
        assert features['inputs'][path] == digest
    assert 'ingest/W.csv' in features['inputs']


def test_stage_artifacts_line_up(pipeline):
    out, _, _ = pipeline
    S = artifacts.read_dense(out / 'lda-shopping' / 'S.csv')
    M = artifacts.read_dense(out / 'features' / 'M.csv')
    assert S.shape == (40, 3) and M.shape == (40, 3)
    assert list(S.index) == list(M.index)
    split = pd.read_csv(out / 'lda-shopping' / 'split.csv')
    assert set(split.role) == {'train', 'infer'}
    lasso = pd.read_csv(out / 'baselines' / 'lasso.csv')
    assert list(lasso.columns) == ['lambda', 'r2_train', 'r2_test', 'nnz']
    assert lasso['lambda'].tolist() == [1.0, 0.01]
    summary = artifacts.read_json(out / 'cmf-cv' / 'cv_summary.json')
    assert summary['selected_rank'] in (1, 2)
    lifestyles = pd.read_csv(out / 'report' / 'lifestyles.csv')
    assert set(lifestyles.lifestyle) == {0, 1}
    top = pd.read_csv(out / 'report' / 'behaviors_top_words.csv')
    assert set(top.topic) == {'behavior_0', 'behavior_1', 'behavior_2'}


def test_rerun_reproduces_the_same_hashes(pipeline):
    out, config, _ = pipeline
    before = (out / 'lda-shopping' / 'manifest.json').read_text()
    assert run_stage('lda-shopping', out, config) == 0
    assert (out / 'lda-shopping' / 'manifest.json').read_text() == before


def test_fresh_run_reproduces_the_same_hashes(pipeline, tmp_path):
    out, config, _ = pipeline
    other = tmp_path / 'out'
    for stage in ('synth', 'ingest', 'lda-shopping', 'towers'):
        assert run_stage(stage, other, config) == 0
        assert artifacts.read_manifest(other, stage) == artifacts.read_manifest(out, stage)


def test_seed_flag_overrides_the_root_seed(pipeline, tmp_path):
    out, config, _ = pipeline
    assert run_stage('synth', tmp_path / 'out', config, '--seed', '5') == 0
    reseeded = artifacts.read_manifest(tmp_path / 'out', 'synth')
    original = artifacts.read_manifest(out, 'synth')
    assert reseeded['seed'] != original['seed']
    assert reseeded['config_hash'] != original['config_hash']


def test_missing_upstream_stage_is_a_runtime_error(tmp_path, capsys):
    config = write_config(tmp_path)
    assert run_stage('features', tmp_path / 'out', config) == pls.EXIT_CODE.RUNTIME
    assert "'ingest'" in capsys.readouterr().err


def test_missing_input_files_are_a_runtime_error(tmp_path):
    config = write_config(tmp_path)
    assert run_stage('ingest', tmp_path / 'out', config) == pls.EXIT_CODE.RUNTIME


def test_invalid_config_is_a_usage_error(tmp_path, capsys):
    config = write_config(tmp_path, {'cmf': {'rank': 0}})
    assert run_stage('synth', tmp_path / 'out', config) == pls.EXIT_CODE.USAGE
    assert 'cmf.rank' in capsys.readouterr().err
    assert main(['synth', '--config', str(tmp_path / 'absent.json')]) == pls.EXIT_CODE.USAGE


def test_unknown_stage_is_a_usage_error():
    with pytest.raises(SystemExit) as e:
        main(['lda-towers'])
    assert e.value.code == pls.EXIT_CODE.USAGE

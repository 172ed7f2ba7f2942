import dataclasses
from datetime import datetime
from datetime import timedelta
from datetime import timezone

import numpy as np
import pytest

from .context import pylifestyles as pls
from pylifestyles import artifacts
from pylifestyles import ingest
from pylifestyles import synth
from pylifestyles.synth import SynthConfig

SMALL = SynthConfig(n=40, p=12, d=4, K=3, r=2, days=30, seed=5)


@pytest.fixture(scope='module')
def result():
    return synth.generate(SMALL)


def test_config_validation():
    assert SMALL.errors() == []
    assert any('rank' in e for e in SynthConfig(K=2, d=5, r=3).errors())
    assert any('overlap' in e for e in SynthConfig(private_factors_s=(0,), private_factors_m=(0,)).errors())
    assert any('0..2' in e for e in SynthConfig(private_factors_s=(3,)).errors())
    with pytest.raises(pls.LifestyleError) as e:
        synth.generate(SynthConfig(p=2))
    assert e.value.error_code == pls.ERROR_CODE.INVALID_PARAMS


def test_shapes_and_ranges(result):
    assert result.U.shape == (40, 2)
    assert result.S.shape == (40, 3) and result.M.shape == (40, 4)
    assert result.C.shape == (12, 4)
    assert np.all(result.U >= 0)
    assert np.all(result.S >= 0) and np.all(result.M >= 0)
    assert np.allclose(result.S_clean.sum(axis=1), 1.0)
    assert np.allclose(result.C.sum(axis=1), 1.0)
    assert np.allclose(result.C.max(axis=1), 0.85 + 0.15 / 4)


def test_same_seed_same_study(result):
    again = synth.generate(SMALL)
    assert np.array_equal(again.S, result.S)
    assert again.cdr_events == result.cdr_events
    assert again.ccr_events == result.ccr_events
    other = synth.generate(dataclasses.replace(SMALL, seed=6))
    assert not np.array_equal(other.S, result.S)


def test_planted_private_factors():
    config = SynthConfig(n=20, p=6, d=4, K=3, r=3, days=10, private_factors_s=(1,), private_factors_m=(2,))
    planted = synth.generate(config)
    # factor 1 acts on shopping only, factor 2 on mobility only
    assert np.all(planted.Vm[:, 1] == 0)
    assert np.all(planted.Vs[:, 2] == 0)
    assert np.any(planted.Vs[:, 1] != 0) and np.any(planted.Vm[:, 2] != 0)


def test_towers_lie_in_the_square(result):
    assert len(result.towers) == 12
    assert np.all(np.abs(result.xy) <= SMALL.side_m / 2)
    lat = np.array([t.lat for t in result.towers])
    assert np.all(np.abs(lat - SMALL.center[0]) < 0.2)


def test_pois_carry_ubiquitous_categories(result):
    for tower in result.towers:
        categories = result.pois[tower.tower_id]
        assert set(synth.UBIQUITOUS_CATEGORIES) <= set(categories)
        assert len(categories) >= 10 + len(synth.UBIQUITOUS_CATEGORIES)
        assert all(c.startswith('class') for c in categories if c not in synth.UBIQUITOUS_CATEGORIES)


def test_visits_rebuild_the_visit_matrix(result):
    W = pls.build_visit_matrix(result.cdr_events, [t.tower_id for t in result.towers], result.users)
    assert W == result.W
    start = datetime(2015, 3, 1, tzinfo=timezone.utc)
    assert all(start <= e.timestamp < start + timedelta(days=SMALL.days) for e in result.cdr_events)


def test_transactions(result):
    counts = {}
    for e in result.ccr_events:
        counts[e.user_id] = counts.get(e.user_id, 0) + 1
        assert e.amount > 0
        assert e.mcc in result.mccs
    assert set(counts) == set(result.users)
    assert min(counts.values()) >= 20
    assert np.allclose(result.phi.sum(axis=1), 1.0)
    assert result.mccs[:2] == ['5000', '5037']


def test_sparsity_report(result):
    value = synth.sparsity_report(result.W)
    assert 0.0 < value < 1.0
    assert synth.sparsity_report(np.array([[0, 1], [0, 0]])) == pytest.approx(0.75)
    with pytest.raises(pls.LifestyleError):
        synth.sparsity_report(np.zeros((0, 3)))


def test_written_dataset_parses_cleanly(result, tmp_path):
    paths = synth.write_dataset(result, tmp_path)
    towers = ingest.load_towers(paths['towers.csv'])
    assert towers == result.towers
    cdr = ingest.parse_cdr(paths['cdr.csv'], [t.tower_id for t in towers])
    assert not cdr.errors and cdr.unknown_towers == 0
    assert len(cdr.events) == len(result.cdr_events)
    ccr = ingest.parse_ccr(paths['ccr.csv'])
    assert not ccr.errors and len(ccr.events) == len(result.ccr_events)
    truth = artifacts.read_json(paths['ground_truth.json'])
    assert np.allclose(truth['S'], result.S)
    assert truth['users'] == result.users


def test_planted_views_match_the_full_study(result):
    views = pls.planted_views(SMALL)
    assert np.array_equal(views.U, result.U)
    assert np.array_equal(views.S, result.S)
    assert np.array_equal(views.M, result.M)
    assert not hasattr(views, 'towers')
    assert repr(views) == 'Synthetic(n=40, K=3, d=4)'


def test_primary_behaviors_are_spread_out():
    frequencies = []
    for seed in range(10):
        views = pls.planted_views(SynthConfig(seed=seed))
        assert np.allclose(views.Vs.sum(axis=0), 0.0)
        primary = pls.primary_behavior(views.S_clean)
        frequencies.append(np.bincount(primary).max() / len(primary))
    assert np.mean(frequencies) < 0.75

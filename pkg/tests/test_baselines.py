import numpy as np
import pytest
from sklearn.linear_model import Lasso

from .context import pylifestyles as pls
from pylifestyles import baselines
from pylifestyles.state import global_state as state


@pytest.fixture(autouse=True)
def default_state():
    state.set_defaults()
    yield
    state.set_defaults()


@pytest.fixture(scope='module')
def study():
    return pls.generate_synthetic(pls.SynthConfig(seed=0))


def regression_data(n=80, p=6, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = 2.0 * X[:, 0] - 1.0 * X[:, 2] + 0.1 * rng.standard_normal(n) + 5.0
    return X, y


# coordinate descent
def test_lasso_cd_matches_sklearn():
    X, y = regression_data()
    coef, intercept, _ = baselines.lasso_cd(X, y, 0.1, tol=1e-12)
    reference = Lasso(alpha=0.1, tol=1e-12, max_iter=100_000).fit(X, y)
    assert coef == pytest.approx(reference.coef_, abs=1e-6)
    assert intercept == pytest.approx(reference.intercept_, abs=1e-6)


def test_lasso_cd_without_penalty_is_least_squares():
    X, y = regression_data()
    coef, intercept, _ = baselines.lasso_cd(X, y, 0.0, tol=1e-14)
    design = np.hstack([X, np.ones((len(y), 1))])
    expected = np.linalg.lstsq(design, y, rcond=None)[0]
    assert coef == pytest.approx(expected[:-1], abs=1e-6)
    assert intercept == pytest.approx(expected[-1], abs=1e-6)


def test_lasso_cd_large_penalty_zeroes_everything():
    X, y = regression_data()
    Xc = X - X.mean(axis=0)
    lam_max = np.max(np.abs(Xc.T @ (y - y.mean()))) / len(y)
    coef, intercept, sweeps = baselines.lasso_cd(X, y, lam_max * 1.01)
    assert np.all(coef == 0)
    assert intercept == pytest.approx(y.mean())
    assert sweeps == 1


def test_lasso_cd_objective_never_increases():
    X, y = regression_data(seed=3)
    values = [baselines.lasso_objective(X, y, np.zeros(X.shape[1]), 0.05)]
    for sweeps in (1, 2, 3, 4):
        coef, _, _ = baselines.lasso_cd(X, y, 0.05, tol=0.0, max_iter=sweeps)
        values.append(baselines.lasso_objective(X, y, coef, 0.05))
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_lasso_cd_constant_column_stays_zero():
    X, y = regression_data()
    X[:, 1] = 3.0
    coef, _, _ = baselines.lasso_cd(X, y, 0.01)
    assert coef[1] == 0.0
    with pytest.raises(pls.LifestyleError):
        baselines.lasso_cd(X, y, -1.0)


def test_r2():
    assert baselines.r2([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert baselines.r2([1, 2, 3], [2, 2, 2]) == pytest.approx(0.0)
    assert np.isnan(baselines.r2([4, 4], [4, 4]))


# regularization path
def test_lasso_regression_path():
    X, y = regression_data()
    rows = baselines.lasso_regression(X, y, [1e-4, 10.0, 0.1], folds=4, seed=0)
    assert [row.lam for row in rows] == [10.0, 0.1, 1e-4]
    assert rows[0].nnz == 0
    assert rows[-1].r2_train > 0.99
    assert rows[-1].r2_test > 0.95
    assert rows[0].r2_test < rows[-1].r2_test


def test_lasso_regression_huge_penalty_has_no_skill():
    X, y = regression_data()
    rows = baselines.lasso_regression(X, y, [1e6], folds=4, seed=0)
    assert rows[0].nnz == 0
    assert rows[0].r2_test <= 0
    assert rows[0].r2_train == pytest.approx(0.0, abs=1e-12)


def test_lasso_regression_accepts_count_matrix():
    rng = np.random.default_rng(1)
    counts = rng.poisson(2.0, size=(30, 4))
    W = pls.SparseCountMatrix(counts, [f"u{i}" for i in range(30)], ['t0', 't1', 't2', 't3'])
    y = counts[:, 0] * 1.5 + rng.random(30)
    rows = baselines.lasso_regression(W, y, [0.01], folds=3)
    assert len(rows) == 1 and rows[0].nnz >= 1


def test_lasso_regression_rejects_constant_target():
    X, _ = regression_data(n=10)
    with pytest.raises(pls.LifestyleError) as e:
        baselines.lasso_regression(X, np.ones(10))
    assert e.value.error_code == pls.ERROR_CODE.INVALID_PARAMS
    with pytest.raises(pls.LifestyleError) as e:
        baselines.lasso_regression(X, np.arange(9.0))
    assert e.value.error_code == pls.ERROR_CODE.SHAPE_MISMATCH


# classification
def test_primary_behavior_breaks_ties_low():
    assert baselines.primary_behavior([0.2, 0.4, 0.4]) == 1
    labels = baselines.primary_behavior(np.array([[0.5, 0.5], [0.1, 0.9]]))
    assert labels.tolist() == [0, 1]


def test_classify_primary_separable_classes():
    rng = np.random.default_rng(2)
    labels = np.repeat([0, 1, 2], 20)
    X = np.eye(3)[labels] * 5 + 0.1 * rng.random((60, 3))
    report = baselines.classify_primary(X, labels, folds=5, seed=0)
    assert report.majority_frequency == pytest.approx(1 / 3)
    assert report.flags == []
    logistic = [r.accuracy for r in report.rows if r.classifier == 'logistic']
    majority = [r.accuracy for r in report.rows if r.classifier == 'majority']
    assert len(logistic) == len(majority) == 5
    assert np.mean(logistic) > 0.95
    assert np.mean(majority) < 0.5


def test_classify_primary_flags_single_class_training_fold():
    X = np.arange(10.0).reshape(5, 2)
    labels = np.array([0, 0, 0, 0, 1])
    report = baselines.classify_primary(X, labels, folds=5, seed=0)
    assert len(report.flags) == 1
    assert sum(r.classifier == 'majority' for r in report.rows) == 5
    assert sum(r.classifier == 'logistic' for r in report.rows) == 4
    assert report.majority_frequency == pytest.approx(0.8)


def test_classify_primary_needs_two_classes():
    with pytest.raises(pls.LifestyleError) as e:
        baselines.classify_primary(np.zeros((4, 1)), np.zeros(4, dtype=int), folds=2)
    assert e.value.error_code == pls.ERROR_CODE.INVALID_PARAMS


def test_classify_primary_rejects_empty_penalty_grid():
    X = np.random.default_rng(0).random((10, 2))
    with pytest.raises(pls.LifestyleError) as e:
        baselines.classify_primary(X, np.array([0, 1] * 5), folds=2, C_grid=[])
    assert e.value.error_code == pls.ERROR_CODE.INVALID_PARAMS


def test_logistic_on_permuted_labels_tracks_the_majority(study):
    labels = baselines.primary_behavior(study.S)
    gaps = []
    for seed in range(10):
        permuted = np.random.default_rng(seed).permutation(labels)
        report = baselines.classify_primary(study.W, permuted, folds=5, seed=seed)
        logistic = np.mean([r.accuracy for r in report.rows if r.classifier == 'logistic'])
        gaps.append(logistic - report.majority_frequency)
    assert all(abs(gap) <= 0.05 for gap in gaps), gaps

import time

import numpy as np
import pytest

from .context import pylifestyles as pls
from pylifestyles import lda
from pylifestyles.state import global_state as state

A_WORDS = [f"a{j}" for j in range(5)]
B_WORDS = [f"b{j}" for j in range(5)]


@pytest.fixture(autouse=True)
def default_state():
    state.set_defaults()
    yield
    state.set_defaults()


def two_topic_corpus(per_group=10, vocabulary=None):
    rows, cols, values = [], [], []
    for i in range(per_group):
        for w in A_WORDS:
            rows.append(f"da{i:02d}")
            cols.append(w)
            values.append(4)
        for w in B_WORDS:
            rows.append(f"db{i:02d}")
            cols.append(w)
            values.append(4)
    return pls.SparseCountMatrix.from_triplets(rows, cols, values, cols=vocabulary or A_WORDS + B_WORDS)


@pytest.fixture(scope='module')
def model():
    return lda.train(two_topic_corpus(), K=2, alpha=0.5, iterations=200, seed=7)


def test_default_alpha():
    assert lda.default_alpha(5) == pytest.approx(10.0)
    assert lda.default_alpha(20) == pytest.approx(2.5)


def test_train_is_row_stochastic(model):
    assert model.phi.shape == (2, 10)
    assert model.theta.shape == (20, 2)
    assert np.allclose(model.phi.sum(axis=1), 1.0)
    assert np.allclose(model.theta.sum(axis=1), 1.0)


def test_train_separates_disjoint_vocabularies(model):
    primary = model.theta.argmax(axis=1)
    assert len(set(primary[:10])) == 1
    assert len(set(primary[10:])) == 1
    assert primary[0] != primary[10]
    a_topic = primary[0]
    assert {w for w, _ in lda.top_words(model, a_topic, 5)} == set(A_WORDS)


def test_train_is_seed_deterministic():
    corpus = two_topic_corpus()
    first = lda.train(corpus, K=3, iterations=20, seed=11)
    second = lda.train(corpus, K=3, iterations=20, seed=11)
    assert np.array_equal(first.phi, second.phi)
    assert np.array_equal(first.theta, second.theta)


def test_train_does_not_depend_on_column_order():
    shuffled = B_WORDS[::-1] + A_WORDS[::-1]
    plain = lda.train(two_topic_corpus(), K=2, iterations=15, seed=3)
    permuted = lda.train(two_topic_corpus(vocabulary=shuffled), K=2, iterations=15, seed=3)
    order = [permuted.vocabulary.index(w) for w in plain.vocabulary]
    assert np.allclose(plain.phi, permuted.phi[:, order])
    assert np.allclose(plain.theta, permuted.theta)


def test_train_callback_sees_consistent_counts():
    corpus = two_topic_corpus(per_group=2)
    seen = []

    def on_sweep(sweep, gibbs):
        seen.append(sweep)
        assert gibbs.n_k.sum() == gibbs.n_tokens == corpus.total()
        assert np.array_equal(gibbs.n_dk.sum(axis=0), gibbs.n_k)
        assert np.array_equal(gibbs.n_kw.sum(axis=0), np.asarray(corpus.values.sum(axis=0)).ravel())

    lda.train(corpus, K=2, iterations=4, seed=0, on_sweep=on_sweep)
    assert seen == [0, 1, 2, 3]


def test_train_rejects_bad_inputs():
    corpus = two_topic_corpus(per_group=1)
    with pytest.raises(pls.LifestyleError) as e:
        lda.train(corpus, K=0)
    assert e.value.error_code == pls.ERROR_CODE.INVALID_PARAMS
    with pytest.raises(pls.LifestyleError) as e:
        lda.train(corpus, K=int(corpus.total()) + 1, iterations=1)
    assert e.value.error_code == pls.ERROR_CODE.INVALID_PARAMS
    empty = pls.SparseCountMatrix.from_triplets([], [], [], rows=['d0'], cols=['w0'])
    with pytest.raises(pls.LifestyleError) as e:
        lda.train(empty, K=1)
    assert e.value.error_code == pls.ERROR_CODE.EMPTY_INPUT


# fold-in
def test_infer_assigns_new_document_to_its_topic(model):
    a_topic = model.theta[0].argmax()
    docs = pls.SparseCountMatrix.from_triplets(['new'] * 3, A_WORDS[:3], [3, 3, 3])
    theta = lda.infer(model, docs, iterations=50, seed=1)
    assert theta.shape == (1, 2)
    assert theta[0].argmax() == a_topic
    assert theta.sum() == pytest.approx(1.0)


def test_infer_empty_and_oov_documents_are_uniform(model):
    docs = pls.SparseCountMatrix.from_triplets(['oov'], ['zzz'], [2], rows=['empty', 'oov'])
    theta = lda.infer(model, docs, iterations=10, seed=0)
    assert np.allclose(theta, 0.5)


def test_infer_oov_documents_raise_in_strict_session(model):
    docs = pls.SparseCountMatrix.from_triplets(['oov'], ['zzz'], [2])
    with pls.session(raise_on_errors=True):
        with pytest.raises(pls.LifestyleError) as e:
            lda.infer(model, docs, iterations=1)
    assert e.value.error_code == pls.ERROR_CODE.EMPTY_INPUT


def test_top_words_caps_at_vocabulary(model):
    words = lda.top_words(model, 0, k=50)
    assert len(words) == 10
    weights = [w for _, w in words]
    assert weights == sorted(weights, reverse=True)
    with pytest.raises(pls.LifestyleError):
        lda.top_words(model, 2)


def test_perplexity_on_separable_heldout(model):
    heldout = two_topic_corpus(per_group=2)
    value = lda.perplexity(model, heldout, iterations=50, seed=0)
    assert 1.0 <= value < 8.0


def test_perplexity_sweep_reports_each_k():
    corpus, heldout = two_topic_corpus(per_group=4), two_topic_corpus(per_group=1)
    table = lda.perplexity_sweep(corpus, heldout, [1, 2], iterations=30, infer_iterations=20, seed=0)
    assert [k for k, _ in table] == [1, 2]
    assert all(np.isfinite(p) and p >= 1 for _, p in table)


def test_model_dict_preserves_phi(model):
    restored = lda.TopicModel.from_dict(model.to_dict())
    assert np.array_equal(restored.phi, model.phi)
    assert restored.vocabulary == model.vocabulary
    assert restored.K == 2


# user split
def test_split_users_is_disjoint_and_seeded():
    train, infer = lda.split_users(10, 0.4, seed=5)
    assert len(train) == 4 and len(infer) == 6
    assert not set(train) & set(infer)
    assert sorted(set(train) | set(infer)) == list(range(10))
    again, _ = lda.split_users(10, 0.4, seed=5)
    assert np.array_equal(train, again)


def test_split_users_keeps_both_sides():
    train, infer = lda.split_users(2, 0.1)
    assert len(train) == 1 and len(infer) == 1
    with pytest.raises(pls.LifestyleError):
        lda.split_users(10, 1.0)


def planted_corpus(seed, docs=500, tokens=50, words=10):
    """Two topics over disjoint halves of the vocabulary."""
    rng = np.random.default_rng(seed)
    vocabulary = [f"w{j}" for j in range(words)]
    phi = np.zeros((2, words))
    phi[0, :words // 2] = 2.0 / words
    phi[1, words // 2:] = 2.0 / words
    counts = np.zeros((docs, words), dtype=np.int64)
    for d, theta in enumerate(rng.dirichlet([0.5, 0.5], size=docs)):
        per_topic = rng.multinomial(tokens, theta)
        for k in range(2):
            counts[d] += rng.multinomial(per_topic[k], phi[k])
    return pls.SparseCountMatrix(counts, [f"d{d:03d}" for d in range(docs)], vocabulary), phi, vocabulary


def matched_cosine(estimated, planted):
    def cosine(a, b):
        return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

    straight = min(cosine(estimated[0], planted[0]), cosine(estimated[1], planted[1]))
    crossed = min(cosine(estimated[0], planted[1]), cosine(estimated[1], planted[0]))
    return max(straight, crossed)


def test_train_recovers_planted_topics():
    started = time.perf_counter()
    recovered = 0
    for seed in range(10):
        corpus, phi, vocabulary = planted_corpus(seed)
        model = lda.train(corpus, K=2, alpha=0.5, iterations=500, seed=seed, log_every=0)
        planted = phi[:, [vocabulary.index(w) for w in model.vocabulary]]
        recovered += matched_cosine(model.phi, planted) >= 0.9
    assert recovered >= 9
    assert time.perf_counter() - started < 60


def test_perplexity_of_a_single_word_vocabulary_is_one():
    model = lda.TopicModel(np.ones((2, 1)), np.empty((0, 2)), 0.5, 0.01, ['w'])
    heldout = pls.SparseCountMatrix([[3], [5]], ['d0', 'd1'], ['w'])
    assert lda.perplexity(model, heldout, iterations=10, seed=0) == pytest.approx(1.0)


def test_perplexity_of_uniform_topics_is_the_vocabulary_size():
    vocabulary = ['w0', 'w1', 'w2', 'w3']
    model = lda.TopicModel(np.full((3, 4), 0.25), np.empty((0, 3)), 0.5, 0.01, vocabulary)
    heldout = pls.SparseCountMatrix([[1, 0, 2, 3], [0, 4, 0, 1]], ['d0', 'd1'], vocabulary)
    assert lda.perplexity(model, heldout, iterations=10, seed=0) == pytest.approx(4.0)

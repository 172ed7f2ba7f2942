"""Latent Dirichlet allocation by collapsed Gibbs sampling, with fold-in inference for unseen documents.

Used twice by the pipeline: shopping behaviors over MCC documents (one document per user) and tower classes over
POI documents (one document per tower).
"""
import numpy as np
import scipy.sparse as sp
from numba import njit

from . import const as _const
from . import helpers as _h
from .core import _logged_operation
from .core import flag
from .core import LifestyleError
from .core import log_info
from .core import require
from .matrix import SparseCountMatrix
from .types import *


@njit(cache=True)
def _gibbs_sweep(doc_ids, word_ids, z, n_dk, n_kw, n_k, alpha, beta, v_beta, uniforms):
    K = n_k.shape[0]
    cumulative = np.empty(K)
    for t in range(doc_ids.shape[0]):
        d = doc_ids[t]
        w = word_ids[t]
        k = z[t]
        n_dk[d, k] -= 1
        n_kw[k, w] -= 1
        n_k[k] -= 1
        total = 0.0
        for j in range(K):
            total += (n_dk[d, j] + alpha) * (n_kw[j, w] + beta) / (n_k[j] + v_beta)
            cumulative[j] = total
        u = uniforms[t] * total
        k = 0
        while k < K - 1 and cumulative[k] <= u:
            k += 1
        z[t] = k
        n_dk[d, k] += 1
        n_kw[k, w] += 1
        n_k[k] += 1


@njit(cache=True)
def _fold_in_sweep(doc_ids, word_ids, z, n_dk, phi, alpha, uniforms):
    K = phi.shape[0]
    cumulative = np.empty(K)
    for t in range(doc_ids.shape[0]):
        d = doc_ids[t]
        w = word_ids[t]
        n_dk[d, z[t]] -= 1
        total = 0.0
        for j in range(K):
            total += (n_dk[d, j] + alpha) * phi[j, w]
            cumulative[j] = total
        u = uniforms[t] * total
        k = 0
        while k < K - 1 and cumulative[k] <= u:
            k += 1
        z[t] = k
        n_dk[d, k] += 1


class GibbsState:
    """Token-topic assignment state handed to per-sweep callbacks."""

    def __init__(self, doc_ids: Array, word_ids: Array, z: Array, n_dk: Array, n_kw: Array, n_k: Array):
        self.doc_ids = doc_ids
        self.word_ids = word_ids
        self.z = z
        self.n_dk = n_dk
        self.n_kw = n_kw
        self.n_k = n_k

    @property
    def n_tokens(self) -> int:
        return int(self.doc_ids.shape[0])


class TopicModel:
    def __init__(self, phi: Array, theta: Array, alpha: float, beta: float, vocabulary: Sequence[str],
                 seed: int = None, documents: Sequence[str] = None):
        self.phi = np.asarray(phi, dtype=float)
        self.theta = np.asarray(theta, dtype=float)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.vocabulary = [str(w) for w in vocabulary]
        self.seed = seed
        self.documents = list(documents) if documents is not None else None
        if self.phi.shape[1] != len(self.vocabulary):
            raise LifestyleError(_const.ERROR_CODE.SHAPE_MISMATCH,
                                 f"phi has {self.phi.shape[1]} columns for {len(self.vocabulary)} words")

    @property
    def K(self) -> int:
        return self.phi.shape[0]

    @property
    def V(self) -> int:
        return self.phi.shape[1]

    def to_dict(self) -> dict:
        return dict(K=self.K, alpha=self.alpha, beta=self.beta, vocabulary=self.vocabulary,
                    phi=_h.make_native(self.phi), seed=self.seed)

    @classmethod
    def from_dict(cls, d: dict) -> 'TopicModel':
        phi = np.asarray(d['phi'], dtype=float).reshape(int(d['K']), len(d['vocabulary']))
        return cls(phi, np.empty((0, phi.shape[0])), d['alpha'], d['beta'], d['vocabulary'], d.get('seed'))

    def __repr__(self):
        return f"TopicModel(K={self.K}, V={self.V}, D={self.theta.shape[0]})"


def default_alpha(K: int) -> float:
    return _const.LDA_ALPHA_NUMERATOR / K


def _tokens(corpus: SparseCountMatrix, label_rank: Array) -> Tuple[Array, Array]:
    """Expand counts to one entry per token, ordered by document then word label."""
    coo = corpus.values.tocoo()
    order = np.lexsort((label_rank[coo.col], coo.row))
    counts = coo.data[order].astype(np.int64)
    doc_ids = np.repeat(coo.row[order].astype(np.int64), counts)
    word_ids = np.repeat(coo.col[order].astype(np.int64), counts)
    return doc_ids, word_ids


def _label_rank(labels: Sequence[str]) -> Array:
    rank = np.empty(len(labels), dtype=np.int64)
    rank[np.argsort(np.asarray(labels, dtype=object), kind='stable')] = np.arange(len(labels))
    return rank


def _estimate(n_dk: Array, n_kw: Array, n_k: Array, alpha: float, beta: float) -> Tuple[Array, Array]:
    K, V = n_kw.shape
    phi = (n_kw + beta) / (n_k[:, None] + V * beta)
    n_d = n_dk.sum(axis=1)
    theta = (n_dk + alpha) / (n_d[:, None] + K * alpha)
    return phi, theta


def _log_likelihood(doc_ids: Array, word_ids: Array, phi: Array, theta: Array) -> float:
    p = np.einsum('tk,kt->t', theta[doc_ids], phi[:, word_ids])
    return float(np.log(p).sum())


@_logged_operation()
def train(corpus: SparseCountMatrix,
          K: int,
          alpha: float = None,
          beta: float = _const.LDA_BETA,
          iterations: int = _const.LDA_TRAIN_ITERATIONS,
          seed: int = 0,
          on_sweep: Callable[[int, GibbsState], None] = None,
          log_every: int = 100,
          ) -> TopicModel:
    """Fit LDA by collapsed Gibbs sampling over token-topic assignments.

    :param corpus: Documents x words counts.
    :param K: Number of topics.
    :param alpha: Document-topic Dirichlet hyperparameter. Defaults to 50/K.
    :param beta: Topic-word Dirichlet hyperparameter.
    :param iterations: Number of full sweeps.
    :param seed: Seed for the initial assignment and every sweep's uniforms.
    :param on_sweep: Called as on_sweep(sweep, state) after each sweep.
    :param log_every: Log the training log likelihood every this many sweeps (0 disables).
    :return: TopicModel with phi and theta estimated from the final assignment state.
    """
    require(K >= 1, _const.ERROR_CODE.INVALID_PARAMS, f"K must be >= 1, got {K}")
    alpha = default_alpha(K) if alpha is None else alpha
    require(alpha > 0 and beta > 0, _const.ERROR_CODE.INVALID_PARAMS, "alpha and beta must be > 0")
    require(iterations >= 0, _const.ERROR_CODE.INVALID_PARAMS, "iterations must be >= 0")
    total = int(corpus.total())
    require(total > 0, _const.ERROR_CODE.EMPTY_INPUT, "Corpus has no tokens")
    require(K <= total, _const.ERROR_CODE.INVALID_PARAMS, f"K={K} exceeds the {total} corpus tokens")
    D, V = corpus.shape
    doc_ids, word_ids = _tokens(corpus, _label_rank(list(corpus.cols)))
    rng = np.random.default_rng(seed)
    z = rng.integers(K, size=doc_ids.shape[0]).astype(np.int64)
    n_dk = np.zeros((D, K), dtype=np.int64)
    n_kw = np.zeros((K, V), dtype=np.int64)
    np.add.at(n_dk, (doc_ids, z), 1)
    np.add.at(n_kw, (z, word_ids), 1)
    n_k = n_kw.sum(axis=1)
    state = GibbsState(doc_ids, word_ids, z, n_dk, n_kw, n_k)
    for sweep in range(iterations):
        _gibbs_sweep(doc_ids, word_ids, z, n_dk, n_kw, n_k, float(alpha), float(beta), float(V * beta),
                     rng.random(doc_ids.shape[0]))
        if on_sweep is not None:
            on_sweep(sweep, state)
        if log_every and (sweep + 1) % log_every == 0:
            phi, theta = _estimate(n_dk, n_kw, n_k, alpha, beta)
            log_info('LDA Checkpoint', 'lda_checkpoint', sweep=sweep + 1,
                     log_likelihood=_log_likelihood(doc_ids, word_ids, phi, theta))
    phi, theta = _estimate(n_dk, n_kw, n_k, alpha, beta)
    return TopicModel(phi, theta, alpha, beta, list(corpus.cols), seed, list(corpus.rows))


def _align(model: TopicModel, docs: SparseCountMatrix) -> Tuple[SparseCountMatrix, Array]:
    """Restrict docs to the model vocabulary. Returns the aligned corpus and per-document OOV token counts."""
    lookup = {w: i for i, w in enumerate(model.vocabulary)}
    pos = np.asarray([lookup.get(str(w), -1) for w in docs.cols], dtype=np.int64)
    known = np.flatnonzero(pos >= 0)
    oov = np.asarray(docs.values[:, np.flatnonzero(pos < 0)].sum(axis=1)).ravel().astype(np.int64)
    kept = docs.values[:, known].tocoo()
    aligned = sp.coo_matrix((kept.data, (kept.row, pos[known][kept.col])), shape=(docs.shape[0], model.V))
    return SparseCountMatrix(aligned.tocsr(), docs.rows, model.vocabulary), oov


@_logged_operation()
def infer(model: TopicModel,
          docs: SparseCountMatrix,
          iterations: int = _const.LDA_INFER_ITERATIONS,
          seed: int = 0,
          ) -> Array:
    """Fold-in Gibbs sampling: phi stays fixed and only the new documents' assignments are resampled.

    Out-of-vocabulary tokens are dropped and counted. Documents left without tokens get a uniform row; documents
    that had tokens but all of them out of vocabulary are flagged.

    :return: Row-stochastic theta, one row per document.
    """
    aligned, oov = _align(model, docs)
    K = model.K
    doc_ids, word_ids = _tokens(aligned, _label_rank(model.vocabulary))
    lengths = aligned.row_sums()
    all_oov = np.flatnonzero((lengths == 0) & (oov > 0))
    if oov.sum():
        log_info('OOV Tokens Dropped', 'lda_oov', tokens=int(oov.sum()), documents=int((oov > 0).sum()))
    if all_oov.size:
        flag(_const.ERROR_CODE.EMPTY_INPUT, f'{all_oov.size} documents are entirely out of vocabulary',
             documents=[str(docs.rows[i]) for i in all_oov[:10]])
    rng = np.random.default_rng(seed)
    z = rng.integers(K, size=doc_ids.shape[0]).astype(np.int64)
    n_dk = np.zeros((docs.shape[0], K), dtype=np.int64)
    np.add.at(n_dk, (doc_ids, z), 1)
    phi = np.ascontiguousarray(model.phi)
    for _ in range(iterations):
        _fold_in_sweep(doc_ids, word_ids, z, n_dk, phi, float(model.alpha), rng.random(doc_ids.shape[0]))
    n_d = n_dk.sum(axis=1)
    return (n_dk + model.alpha) / (n_d[:, None] + K * model.alpha)


@_logged_operation()
def top_words(model: TopicModel, topic: int, k: int = _const.TOP_K) -> List[Tuple[str, float]]:
    """The k highest-weighted words of a topic, descending, ties broken by vocabulary order."""
    require(0 <= topic < model.K, _const.ERROR_CODE.INVALID_PARAMS, f"topic {topic} outside 0..{model.K - 1}")
    row = model.phi[topic]
    order = np.argsort(-row, kind='stable')[:max(0, k)]
    return [(model.vocabulary[i], float(row[i])) for i in order]


@_logged_operation()
def perplexity(model: TopicModel,
               heldout: SparseCountMatrix,
               iterations: int = _const.LDA_INFER_ITERATIONS,
               seed: int = 0,
               ) -> float:
    """exp(-log likelihood / token count) of held-out documents, with theta from fold-in inference."""
    aligned, _ = _align(model, heldout)
    n_tokens = aligned.total()
    require(n_tokens > 0, _const.ERROR_CODE.EMPTY_INPUT, "No in-vocabulary held-out tokens")
    theta = infer(model, heldout, iterations=iterations, seed=seed)
    coo = aligned.values.tocoo()
    p = np.einsum('ik,ki->i', theta[coo.row], model.phi[:, coo.col])
    return float(np.exp(-(coo.data * np.log(p)).sum() / n_tokens))


@_logged_operation()
def perplexity_sweep(corpus: SparseCountMatrix,
                     heldout: SparseCountMatrix,
                     K_grid: Iterable[int],
                     alpha: float = None,
                     beta: float = _const.LDA_BETA,
                     iterations: int = _const.LDA_TRAIN_ITERATIONS,
                     infer_iterations: int = _const.LDA_INFER_ITERATIONS,
                     seed: int = 0,
                     ) -> List[Tuple[int, float]]:
    """Held-out perplexity per topic count. A diagnostic for choosing K, not a selection rule."""
    table = []
    for K in K_grid:
        model = train(corpus, K, alpha=alpha, beta=beta, iterations=iterations, seed=seed, log_every=0)
        table.append((int(K), perplexity(model, heldout, iterations=infer_iterations, seed=seed)))
    return table


def split_users(n: int, fraction: float = _const.LDA_TRAIN_FRACTION, seed: int = 0) -> Tuple[Array, Array]:
    """Seeded split of row indices into a training share and an inference share.

    Both sides keep at least one row whenever n >= 2.
    """
    require(0 < fraction < 1, _const.ERROR_CODE.INVALID_PARAMS, f"fraction must be in (0, 1), got {fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(n * fraction))
    n_train = min(max(n_train, 1), n - 1) if n >= 2 else n
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])

"""
Comparison systems: dense retrieval, dense retrieval averaged over reformulations, dense
retrieval with MMR, batched pointwise oracle reranking and the session ablation that
observes the dense top-N instead of acquiring.

Every ranking is a list of (doc_id, score) pairs, scores non-increasing, ties by doc id.
"""
import logging
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from boRank.oracle.oracles import ScoreRequest, documents_for
from boRank.search.acquisition import mmr_order
from boRank.search.reformulation import seed_locations
from boRank.search.session import BatchRecord, RetrievalSession, SessionTrace, Variant
from boRank.utils.errors import OracleResponseError, OracleTransportError
from boRank.utils.utils import as_matrix, check_in_range, check_positive, order_by_score

logger = logging.getLogger(__name__)


class BaselineKind(str, Enum):
    DENSE = "dense"
    DENSE_MMR = "dense_mmr"
    DENSE_QR = "dense_qr"
    POINTWISE = "pointwise"
    BO_TOPK = "bo_topk"


@dataclass(frozen=True)
class BaselineConfig:
    """
    Attributes
    ----------
    kind : BaselineKind
    k : int
        Rerank depth for pointwise, output depth otherwise. Default 100
    mmr_lambda : float
        dense_mmr only. Default 0.5
    batch_size : int
        Documents per oracle call for pointwise. Default 10
    """
    kind: BaselineKind = BaselineKind.DENSE
    k: int = 100
    mmr_lambda: float = 0.5
    batch_size: int = 10

    def __post_init__(self):
        object.__setattr__(self, "kind", BaselineKind(self.kind))
        check_positive("k", self.k)
        check_in_range("mmr_lambda", self.mmr_lambda, 0.0, 1.0)
        check_positive("batch_size", self.batch_size)


def dense_scores(store, seeds):
    """Mean dot product of every document with the rows of ``seeds``."""
    seeds = as_matrix(seeds, store.dim, "query embedding")
    return (store.matrix.astype(np.float64) @ seeds.T).mean(axis=1)


def _top(store, scores, k):
    order = order_by_score(scores, store.id_ranks)[:k]
    return [(store.ids[i], float(scores[i])) for i in order]


def dense_rank(q, store, k):
    """
    Top-``k`` documents by dot(z_q, z_d).

    Examples
    --------
    With dots {d1: 0.9, d2: 0.3}, ``dense_rank(q, store, 2)`` gives ``[("d1", 0.9), ("d2", 0.3)]``.
    """
    check_positive("k", k)
    return _top(store, dense_scores(store, q.embedding), k)


def dense_qr_rank(q, refs, store, k):
    """Top-``k`` by the arithmetic mean of the dot products over the query and its reformulations."""
    check_positive("k", k)
    return _top(store, dense_scores(store, seed_locations(q, refs)), k)


def dense_mmr_rank(q, store, k, mmr_lambda):
    """
    Dense retrieval diversified with MMR (dot-product relevance, cosine redundancy).

    The reported score of the document at position i (0-based) is ``n - i`` for a list of
    length n, so it only encodes the order.
    """
    check_positive("k", k)
    check_in_range("mmr_lambda", mmr_lambda, 0.0, 1.0)
    relevance = dense_scores(store, q.embedding)
    doc_ids = mmr_order(relevance, np.arange(len(store)), store, k, mmr_lambda)
    return [(doc_id, float(len(doc_ids) - i)) for i, doc_id in enumerate(doc_ids)]


def pointwise_rerank(q, store, oracle, k=100, B=10, corpus=None, output_k=None, trace=None):
    """
    Grade the dense top-``k`` in batches of ``B`` and sort it by grade.

    Ties keep dense order; documents below rank ``k`` follow the reranked head in dense order.

    Parameters
    ----------
    q : QueryRecord
    store : EmbeddingStore
    oracle : RelevanceOracle
    k : int
        Rerank depth
    B : int
        Documents per oracle call
    corpus : Corpus, optional
    output_k : int, optional
        Length of the returned list, at least ``k``. Default ``k``
    trace : SessionTrace, optional
        Receives one record per oracle call and the status. When given, an oracle failure is
        recorded there (status "failed") and the dense order is returned; otherwise it is raised.

    Returns
    -------
    ranking : list of (str, float)
        Scores are ``n - position``.
    """
    check_positive("k", k)
    check_positive("B", B)
    output_k = max(output_k or k, k)
    started = time.perf_counter()
    dense = [doc_id for doc_id, _ in dense_rank(q, store, output_k)]
    head, tail = dense[:k], dense[k:]
    grades = {}
    if trace is not None:
        trace.other_seconds += time.perf_counter() - started
    try:
        for step, start in enumerate(range(0, len(head), B), start=1):
            doc_ids = head[start:start + B]
            t0 = time.perf_counter()
            batch = oracle.score_batch(ScoreRequest(q.id, q.text, documents_for(doc_ids, corpus)))
            grades.update(zip(doc_ids, batch))
            if trace is not None:
                trace.batches.append(BatchRecord(step, doc_ids, list(batch), "pointwise",
                                                 {"oracle": time.perf_counter() - t0}))
    except (OracleTransportError, OracleResponseError) as e:
        if trace is None:
            raise
        logger.warning("Pointwise reranking of query %s failed: %s; keeping dense order", q.id, e)
        trace.status, trace.error = "failed", str(e)
        ordered = dense
    else:
        position = {doc_id: i for i, doc_id in enumerate(head)}
        ordered = sorted(head, key=lambda d: (-grades[d], position[d])) + tail
        if trace is not None:
            trace.status = "completed"
    ranking = [(doc_id, float(len(ordered) - i)) for i, doc_id in enumerate(ordered)]
    if trace is not None:
        trace.ranking = ranking
    return ranking


def dense_topk_selector(q, refs, store, config):
    """Selector walking the fixed dense top-N list (N = budget) of the session's seeds."""
    seeds = seed_locations(q, refs if config.variant is Variant.QR else None)
    ranked = [doc_id for doc_id, _ in _top(store, dense_scores(store, seeds), config.budget)]

    def select(posterior, store, observed, size):
        observed = set(observed)
        return [doc_id for doc_id in ranked if doc_id not in observed][:size]

    select.label = "dense_topk"
    return select


def bo_topk_ablation(q, refs, store, oracle, config, corpus=None):
    """
    Session whose observations are the dense top-N, B at a time in descending dense score.

    Posterior updates and the final posterior-mean ranking are those of ``run_session``.

    Returns
    -------
    trace : SessionTrace
    """
    selector = dense_topk_selector(q, refs, store, config)
    return RetrievalSession(q, refs, store, oracle, config, corpus, selector=selector).run()


def baseline_trace(q, refs, store, oracle, config, output_k=100, corpus=None):
    """
    Run the baseline described by ``config`` and wrap its ranking in a ``SessionTrace``.

    ``bo_topk`` is not handled here: it needs a ``SessionConfig`` (see ``bo_topk_ablation``).
    """
    trace = SessionTrace(q.id, seeds=1 + (len(refs) if refs is not None else 0))
    started = time.perf_counter()
    if config.kind is BaselineKind.DENSE:
        trace.ranking = dense_rank(q, store, output_k)
    elif config.kind is BaselineKind.DENSE_QR:
        trace.ranking = dense_qr_rank(q, refs, store, output_k)
    elif config.kind is BaselineKind.DENSE_MMR:
        trace.ranking = dense_mmr_rank(q, store, output_k, config.mmr_lambda)
    elif config.kind is BaselineKind.POINTWISE:
        pointwise_rerank(q, store, oracle, config.k, config.batch_size, corpus, output_k, trace)
        return trace
    else:
        raise ValueError(f"{config.kind.value} is a session method, use bo_topk_ablation")
    trace.status = "completed"
    trace.other_seconds = time.perf_counter() - started
    return trace

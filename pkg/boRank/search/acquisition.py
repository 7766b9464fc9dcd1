"""
Document acquisition: single-point scores (greedy, UCB, random) and batch selection
(Top-B, Kriging Believer, MMR) over the documents not yet observed.

Every selector breaks ties in favour of the lexicographically smaller doc id.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from boRank.corpus.store import EmbeddingStore
from boRank.gp.posterior import Observation, Provenance
from boRank.utils.errors import EmptyCandidateSetError, InvalidParameterError
from boRank.utils.utils import argmax_tiebreak, check_in_range, check_positive, order_by_score

logger = logging.getLogger(__name__)


class AcquisitionKind(str, Enum):
    GREEDY = "greedy"
    UCB = "ucb"
    RANDOM = "random"


class BatchStrategy(str, Enum):
    TOP_B = "top_b"
    KRIGING_BELIEVER = "kriging_believer"
    MMR = "mmr"


@dataclass(frozen=True)
class AcquisitionConfig:
    """
    Attributes
    ----------
    kind : AcquisitionKind
        Single-point acquisition function. Default UCB
    beta : float
        UCB exploration weight, alpha = mu + sqrt(beta) * sigma. Default 1
    batch_strategy : BatchStrategy
        Default Top-B
    batch_size : int
        Documents per batch (B). Default 10
    mmr_lambda : float
        MMR trade-off in [0, 1]; 1 means no diversification. Default 0.5
    rng_seed : int
        Seed for the random acquisition function
    pool_size : int or None
        If set, only the union of each seed's dense top ``pool_size`` documents is scored.
    """
    kind: AcquisitionKind = AcquisitionKind.UCB
    beta: float = 1.0
    batch_strategy: BatchStrategy = BatchStrategy.TOP_B
    batch_size: int = 10
    mmr_lambda: float = 0.5
    rng_seed: int = 0
    pool_size: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", AcquisitionKind(self.kind))
        object.__setattr__(self, "batch_strategy", BatchStrategy(self.batch_strategy))
        check_positive("beta", self.beta, strict=False)
        check_positive("batch_size", self.batch_size)
        check_in_range("mmr_lambda", self.mmr_lambda, 0.0, 1.0)
        if self.pool_size is not None:
            check_positive("pool_size", self.pool_size)


@dataclass(frozen=True)
class CandidateSet:
    """Eligible store rows and their acquisition scores (parallel arrays)."""
    indices: np.ndarray
    scores: np.ndarray
    store: EmbeddingStore = field(repr=False)

    def __len__(self):
        return len(self.indices)

    @property
    def doc_ids(self):
        return [self.store.ids[i] for i in self.indices]


def _seed_pool(posterior, store, pool_size):
    seeds = [obs.location for obs in posterior.observations
             if obs.provenance in (Provenance.INITIAL_QUERY, Provenance.REFORMULATION)]
    pool = np.zeros(len(store), dtype=bool)
    for seed in seeds:
        dots = store.matrix @ seed.astype(np.float32)
        pool[order_by_score(dots, store.id_ranks)[:pool_size]] = True
    return pool


def score_candidates(posterior, store, excluded, config):
    """
    Score every eligible document with the single-point acquisition function.

    Parameters
    ----------
    posterior : GpPosterior
    store : EmbeddingStore
    excluded : iterable of str
        Already observed (or already selected) doc ids
    config : AcquisitionConfig

    Returns
    -------
    candidates : CandidateSet

    Raises
    ------
    EmptyCandidateSetError
        If every document is excluded.
    """
    mask = np.ones(len(store), dtype=bool)
    excluded = list(excluded)
    if excluded:
        try:
            mask[store.indices(excluded)] = False
        except KeyError as e:
            raise InvalidParameterError(f"Excluded doc id {e} is not in the embedding store") from None
    if config.pool_size is not None:
        mask &= _seed_pool(posterior, store, config.pool_size)
    eligible = np.flatnonzero(mask)
    if len(eligible) == 0:
        raise EmptyCandidateSetError()

    if config.kind is AcquisitionKind.RANDOM:
        # One draw over the whole store: exclusions then walk a fixed random permutation
        scores = np.random.default_rng(config.rng_seed).random(len(store))[eligible]
    elif config.kind is AcquisitionKind.GREEDY:
        scores = posterior.predict_mean(store.matrix[eligible])
    else:
        mean, variance = posterior.predict(store.matrix[eligible])
        scores = mean + np.sqrt(config.beta) * np.sqrt(variance)
    return CandidateSet(eligible, scores, store)


def select_top_b(cands, B):
    """
    The ``B`` highest-scoring candidates, descending.

    Examples
    --------
    With scores {d1: 0.9, d2: 0.8, d3: 0.7}, ``select_top_b(cands, 2)`` gives ``["d1", "d2"]``.
    """
    check_positive("B", B)
    if len(cands) == 0:
        raise EmptyCandidateSetError()
    order = order_by_score(cands.scores, cands.store.id_ranks[cands.indices])[:B]
    return [cands.store.ids[cands.indices[i]] for i in order]


def select_kriging_believer(posterior, store, excluded, config):
    """
    Sequential batch selection with hallucinated observations.

    After each pick the posterior mean at that document is inserted as a pretend observation
    into a scratch posterior, so uncertainty-aware scores move away from it. The real
    posterior is never modified.
    """
    chosen = []
    excluded = set(excluded)
    scratch = posterior
    for _ in range(config.batch_size):
        try:
            cands = score_candidates(scratch, store, excluded.union(chosen), config)
        except EmptyCandidateSetError:
            if chosen:
                break
            raise
        doc_id = select_top_b(cands, 1)[0]
        chosen.append(doc_id)
        if len(chosen) == config.batch_size:
            break
        location = store.vector(doc_id)
        believed = scratch.predict_mean(location)[0]
        scratch = scratch.insert([Observation(location, believed, Provenance.HALLUCINATED, doc_id)])
    return chosen


def mmr_order(relevance, indices, store, count, mmr_lambda):
    """
    Greedy MMR over store rows ``indices``.

    The first pick maximises ``relevance``; each next pick maximises
    lambda * relevance - (1 - lambda) * max cosine similarity to the picks so far.
    ``relevance`` is computed once by the caller and never updated.
    """
    relevance = np.asarray(relevance, dtype=np.float64)
    indices = np.asarray(indices)
    if len(indices) == 0:
        raise EmptyCandidateSetError()
    ranks = store.id_ranks[indices]
    count = min(count, len(indices))
    unit = store.unit_matrix
    subset = unit[indices] if 2 * len(indices) < len(store) else None

    def similarity(row):
        if subset is None:
            return (unit @ unit[indices[row]])[indices]
        return subset @ unit[indices[row]]

    available = np.ones(len(indices), dtype=bool)
    picked = [argmax_tiebreak(relevance, ranks)]
    available[picked[0]] = False
    max_sim = similarity(picked[0])
    while len(picked) < count:
        objective = mmr_lambda * relevance - (1.0 - mmr_lambda) * max_sim
        objective[~available] = -np.inf
        nxt = argmax_tiebreak(objective, ranks)
        picked.append(nxt)
        available[nxt] = False
        np.maximum(max_sim, similarity(nxt), out=max_sim)
    return [store.ids[indices[i]] for i in picked]


def select_mmr(cands, store, config):
    """MMR-diversified batch of ``config.batch_size`` documents, similarity = cosine."""
    if len(cands) == 0:
        raise EmptyCandidateSetError()
    return mmr_order(cands.scores, cands.indices, store, config.batch_size, config.mmr_lambda)


def select_batch(posterior, store, excluded, config):
    """Dispatch to the configured batch strategy."""
    if config.batch_strategy is BatchStrategy.KRIGING_BELIEVER:
        return select_kriging_believer(posterior, store, excluded, config)
    cands = score_candidates(posterior, store, excluded, config)
    if config.batch_strategy is BatchStrategy.MMR:
        return select_mmr(cands, store, config)
    return select_top_b(cands, config.batch_size)

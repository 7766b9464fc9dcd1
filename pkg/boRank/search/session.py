"""
The retrieval session loop.

A session seeds the relevance posterior with the query (and, for the QR variant, its
reformulations) at value s_max, then repeatedly acquires a batch, has the oracle grade it
and conditions the posterior on the grades until the observation budget is spent. The
posterior mean ranks the whole corpus after any batch.
"""
import json
import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum

from boRank.gp.posterior import GpPosterior, KernelParams, Observation, Provenance
from boRank.oracle.oracles import ScoreRequest, documents_for
from boRank.search.acquisition import AcquisitionConfig, select_batch
from boRank.search.reformulation import seed_locations
from boRank.utils.errors import EmptyCandidateSetError, OracleResponseError, OracleTransportError
from boRank.utils.utils import check_dimension, check_positive, order_by_score

logger = logging.getLogger(__name__)


class Variant(str, Enum):
    IQ = "IQ"  # initial query only
    QR = "QR"  # query + reformulations


@dataclass(frozen=True)
class SessionConfig:
    """
    Attributes
    ----------
    variant : Variant
    budget : int
        N, oracle observations per query. Default 100
    batch_size : int
        B, documents per oracle call. Default 10; the last batch may be smaller
    acquisition : AcquisitionConfig
        Its ``batch_size`` is overridden by ``batch_size``
    kernel : KernelParams
    s_max : int
        Value of the seed observations and upper bound of the grades. Default 3
    output_k : int
        Length of the final ranking. Default 100
    """
    variant: Variant = Variant.IQ
    budget: int = 100
    batch_size: int = 10
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    kernel: KernelParams = field(default_factory=KernelParams)
    s_max: int = 3
    output_k: int = 100

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        check_positive("budget", self.budget, strict=False)
        check_positive("batch_size", self.batch_size)
        check_positive("s_max", self.s_max)
        check_positive("output_k", self.output_k)
        if self.acquisition.batch_size != self.batch_size:
            object.__setattr__(self, "acquisition", replace(self.acquisition, batch_size=self.batch_size))


@dataclass
class BatchRecord:
    step: int
    doc_ids: list
    grades: list
    acquisition: str
    seconds: dict = field(default_factory=dict)  # {acquire, oracle, insert}

    def event(self):
        return {"event": "batch", "step": self.step, "acquisition": self.acquisition,
                "doc_ids": list(self.doc_ids), "grades": [int(g) for g in self.grades]}


@dataclass
class SessionTrace:
    """
    Everything a session did, in order.

    The event stream (``events``/``write``) holds no wall-clock values, so reruns with the same
    seeds give identical files; timings are reported separately by ``timings``.
    """
    query_id: str
    seeds: int = 1
    batches: list = field(default_factory=list)
    ranking: list = field(default_factory=list)
    status: str = "running"
    error: str = ""
    other_seconds: float = 0.0

    @property
    def observed(self):
        return [doc_id for batch in self.batches for doc_id in batch.doc_ids]

    @property
    def total_seconds(self):
        return self.other_seconds + sum(sum(batch.seconds.values()) for batch in self.batches)

    def events(self):
        yield {"event": "start", "query_id": self.query_id, "seeds": self.seeds}
        for batch in self.batches:
            yield batch.event()
        end = {"event": "end", "status": self.status, "observed": len(self.observed),
               "ranking": [[doc_id, float(score)] for doc_id, score in self.ranking]}
        if self.error:
            end["error"] = self.error
        yield end

    def write(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for event in self.events():
                f.write(json.dumps(event) + "\n")

    def timings(self):
        """Seconds per stage: {acquire, oracle, insert, llm, total}."""
        stages = {stage: sum(batch.seconds.get(stage, 0.0) for batch in self.batches)
                  for stage in ("acquire", "oracle", "insert")}
        stages["llm"] = stages["oracle"]
        stages["total"] = self.total_seconds
        return stages


def seed_posterior(q, refs, config, dim=None):
    """
    Posterior conditioned on the seed observations only.

    Parameters
    ----------
    q : QueryRecord
    refs : ReformulationSet or None
        Ignored for the IQ variant
    config : SessionConfig
    dim : int, optional
        Expected embedding dimension

    Returns
    -------
    posterior : GpPosterior
        1 (IQ) or 1 + Q (QR) observations, all with value s_max

    Examples
    --------
    >>> posterior = seed_posterior(query, None, SessionConfig())
    >>> posterior.predict_mean(query.embedding)
    array([1.5])
    """
    locations = seed_locations(q, refs if config.variant is Variant.QR else None)
    if dim is not None:
        check_dimension(dim, locations.shape[1], f"query {q.id} embedding")
    observations = [Observation(locations[0], config.s_max, Provenance.INITIAL_QUERY)]
    observations += [Observation(row, config.s_max, Provenance.REFORMULATION) for row in locations[1:]]
    return GpPosterior.from_observations(observations, config.kernel, dim=locations.shape[1], s_max=config.s_max)


def rank(posterior, store, k):
    """
    Top-``k`` documents of the whole store by posterior mean, ties by doc id.

    Returns
    -------
    ranking : list of (str, float)
    """
    check_positive("k", k)
    mean = posterior.predict_mean(store.matrix)
    order = order_by_score(mean, store.id_ranks)[:k]
    return [(store.ids[i], float(mean[i])) for i in order]


def acquisition_selector(config):
    """Batch selector driven by the acquisition function of ``config``."""
    label = f"{config.acquisition.kind.value}/{config.acquisition.batch_strategy.value}"

    def select(posterior, store, observed, size):
        return select_batch(posterior, store, observed, replace(config.acquisition, batch_size=size))

    select.label = label
    return select


class RetrievalSession:
    """
    One query's session. ``step`` runs one batch; ``ranking`` can be taken at any time.

    Parameters
    ----------
    q : QueryRecord
    refs : ReformulationSet or None
    store : EmbeddingStore
    oracle : RelevanceOracle
    config : SessionConfig
    corpus : Corpus, optional
        Document texts for the oracle request; needed by the LLM oracle only
    selector : callable, optional
        ``selector(posterior, store, observed, size) -> doc ids``; defaults to acquisition
    """

    def __init__(self, q, refs, store, oracle, config, corpus=None, selector=None):
        started = time.perf_counter()
        self.query = q
        self.store = store
        self.oracle = oracle
        self.config = config
        self.corpus = corpus
        self.selector = selector or acquisition_selector(config)
        self.posterior = seed_posterior(q, refs, config, dim=store.dim)
        self.trace = SessionTrace(q.id, seeds=len(self.posterior))
        self._observed = set()
        self.trace.other_seconds += time.perf_counter() - started

    @property
    def remaining(self):
        return min(self.config.budget, len(self.store)) - len(self._observed)

    @property
    def done(self):
        return self.remaining <= 0

    def step(self):
        """
        Acquire, grade and insert one batch.

        Returns
        -------
        record : BatchRecord or None
            None once the budget or the corpus is exhausted.
        """
        if self.done:
            return None
        size = min(self.config.batch_size, self.remaining)
        t0 = time.perf_counter()
        try:
            doc_ids = list(self.selector(self.posterior, self.store, sorted(self._observed), size))
        except EmptyCandidateSetError:
            return None
        if not doc_ids:
            return None
        t1 = time.perf_counter()
        req = ScoreRequest(self.query.id, self.query.text, documents_for(doc_ids, self.corpus))
        grades = self.oracle.score_batch(req)
        t2 = time.perf_counter()
        locations = self.store.vectors(doc_ids)
        self.posterior = self.posterior.insert(
            [Observation(loc, grade, Provenance.ORACLE, doc_id) for loc, grade, doc_id in zip(locations, grades,
                                                                                             doc_ids)])
        t3 = time.perf_counter()
        self._observed.update(doc_ids)
        record = BatchRecord(len(self.trace.batches) + 1, doc_ids, list(grades), getattr(self.selector, "label", ""),
                             {"acquire": t1 - t0, "oracle": t2 - t1, "insert": t3 - t2})
        self.trace.batches.append(record)
        logger.debug("Query %s batch %d: %d docs, grades %s", self.query.id, record.step, len(doc_ids), grades)
        return record

    def ranking(self, k=None):
        return rank(self.posterior, self.store, k or self.config.output_k)

    def run(self):
        """Step until done, then record the final ranking in the trace."""
        try:
            while self.step() is not None:
                pass
            self.trace.status = "completed"
        except (OracleTransportError, OracleResponseError) as e:
            logger.warning("Session for query %s failed after %d batches: %s", self.query.id,
                           len(self.trace.batches), e)
            self.trace.status = "failed"
            self.trace.error = str(e)
        started = time.perf_counter()
        self.trace.ranking = self.ranking()
        self.trace.other_seconds += time.perf_counter() - started
        return self.trace


def run_session(q, refs, store, oracle, config, corpus=None):
    """
    Run a full session.

    Returns
    -------
    trace : SessionTrace
        ``status`` is "failed" (with the partial trace and the anytime ranking so far) if the
        oracle failed mid-session.
    """
    return RetrievalSession(q, refs, store, oracle, config, corpus).run()

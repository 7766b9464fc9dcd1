"""
Batched graded-relevance oracles.

Grades are plain integers in [0, s_max] (UMBRELA scale, s_max = 3 by default). Three
oracles share one interface: an LLM behind HTTP, a qrels-backed simulator with optional
label noise, and a synthetic relevance landscape over the embedding space.
"""
import json
import logging
import re
import threading
import warnings
import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from boRank.corpus.store import Document, load_embeddings
from boRank.oracle.cache import ScoreCache
from boRank.oracle.llm_client import OPENAI_RESPONSE_PATH, LLMClient
from boRank.utils.errors import ConfigError, InvalidParameterError, OracleResponseError, GradeClampedWarning
from boRank.utils.utils import check_in_range, check_positive

logger = logging.getLogger(__name__)


class OracleKind(str, Enum):
    LLM_HTTP = "llm-http"
    SIMULATED_QRELS = "simulated-qrels"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class OracleConfig:
    """
    Attributes
    ----------
    kind : OracleKind
    endpoint : str or None
        Required exactly when kind is llm-http
    model : str
        Model name sent to the endpoint; also part of the cache key
    noise_flip_prob : float
        Simulated oracle only: probability of replacing the true grade by another one
    rng_seed : int
    cache_path : str or None
        Append-only JSONL grade cache
    landscape_embeddings, landscape_manifest : str or None
        Synthetic oracle only: relevance peak centres in the embedding binary format
    landscape_width : float
        Synthetic oracle only: peak width w in s_max * exp(-|z - c|^2 / (2 w^2))
    """
    kind: OracleKind = OracleKind.SIMULATED_QRELS
    endpoint: Optional[str] = None
    model: str = ""
    noise_flip_prob: float = 0.0
    rng_seed: int = 0
    cache_path: Optional[str] = None
    s_max: int = 3
    api_key_env: str = "BORANK_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    backoff_factor: float = 1.0
    request_template: dict = field(default_factory=dict)
    response_path: tuple = OPENAI_RESPONSE_PATH
    landscape_embeddings: Optional[str] = None
    landscape_manifest: Optional[str] = None
    landscape_width: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", OracleKind(self.kind))
        object.__setattr__(self, "response_path", tuple(self.response_path))
        if (self.kind is OracleKind.LLM_HTTP) != bool(self.endpoint):
            raise ConfigError("oracle.endpoint must be set exactly when oracle.kind is 'llm-http'")
        check_in_range("noise_flip_prob", self.noise_flip_prob, 0.0, 1.0)
        check_positive("s_max", self.s_max)
        check_positive("max_retries", self.max_retries, strict=False)
        check_positive("landscape_width", self.landscape_width)


@dataclass(frozen=True)
class ScoreRequest:
    query_id: str
    query_text: str
    docs: tuple

    def __post_init__(self):
        object.__setattr__(self, "docs", tuple(self.docs))
        if not self.docs:
            raise InvalidParameterError("ScoreRequest needs at least one document")
        ids = [doc.id for doc in self.docs]
        if len(set(ids)) != len(ids):
            raise InvalidParameterError(f"ScoreRequest has duplicate doc ids: {ids}")

    @property
    def batch_size(self):
        return len(self.docs)


class RelevanceOracle(ABC):
    """
    Common cache, clamping and call accounting for all oracles.

    Attributes
    ----------
    calls : int
        Number of scoring calls that reached the underlying scorer (cache hits excluded)
    clamped : int
        Number of grades clamped into [0, s_max]
    """
    kind = None

    def __init__(self, model="", s_max=3, cache=None):
        self.model = model
        self.s_max = int(s_max)
        self.cache = cache
        self.calls = 0
        self.clamped = 0
        self._lock = threading.Lock()

    @abstractmethod
    def _score(self, req):
        """Raw grades for every document of ``req``, in order."""

    def _clamp(self, value):
        grade = int(value)
        if 0 <= grade <= self.s_max:
            return grade
        with self._lock:
            self.clamped += 1
        warnings.warn(GradeClampedWarning(f"Grade {grade} clamped into [0, {self.s_max}]"))
        return min(max(grade, 0), self.s_max)

    def cache_lookup(self, query_id, doc_id):
        if self.cache is None:
            return None
        return self.cache.lookup(query_id, doc_id, self.kind.value, self.model)

    def score_batch(self, req):
        """
        Grade every document of ``req``.

        Parameters
        ----------
        req : ScoreRequest

        Returns
        -------
        grades : list of int
            One grade per document, in request order
        """
        grades = {}
        missing = []
        for doc in req.docs:
            cached = self.cache_lookup(req.query_id, doc.id)
            if cached is None:
                missing.append(doc)
            else:
                grades[doc.id] = cached
        if missing:
            sub = req if len(missing) == len(req.docs) else replace(req, docs=tuple(missing))
            raw = self._score(sub)
            with self._lock:
                self.calls += 1
            for doc, value in zip(missing, raw):
                grades[doc.id] = self._clamp(value)
            if self.cache is not None:
                self.cache.store_many((req.query_id, doc.id, self.kind.value, self.model, grades[doc.id])
                                      for doc in missing)
        return [grades[doc.id] for doc in req.docs]


def cache_lookup(oracle, query_id, doc_id):
    return oracle.cache_lookup(query_id, doc_id)


class SimulatedQrelsOracle(RelevanceOracle):
    """
    Grades from qrels, absent pairs graded 0.

    With probability ``noise_flip_prob`` the true grade is replaced by a uniform draw from
    the other grades. Each query has its own seeded random stream, so concurrent sessions
    for different queries stay deterministic.
    """
    kind = OracleKind.SIMULATED_QRELS

    def __init__(self, qrels, noise_flip_prob=0.0, rng_seed=0, s_max=3, cache=None, model="qrels"):
        super().__init__(model, s_max, cache)
        check_in_range("noise_flip_prob", noise_flip_prob, 0.0, 1.0)
        self.qrels = qrels
        self.noise_flip_prob = noise_flip_prob
        self.rng_seed = rng_seed
        self._streams = {}

    def _stream(self, query_id):
        with self._lock:
            if query_id not in self._streams:
                self._streams[query_id] = np.random.default_rng([self.rng_seed, zlib.crc32(query_id.encode())])
            return self._streams[query_id]

    def _score(self, req):
        grades = [self.qrels.grade(req.query_id, doc.id) for doc in req.docs]
        if self.noise_flip_prob == 0:
            return grades
        rng = self._stream(req.query_id)
        noisy = []
        for grade in grades:
            true = min(grade, self.s_max)
            if rng.random() < self.noise_flip_prob:
                others = [g for g in range(self.s_max + 1) if g != true]
                grade = int(rng.choice(others))
            noisy.append(grade)
        return noisy


class SyntheticOracle(RelevanceOracle):
    """
    Synthetic relevance landscape: round(s_max * max_c exp(-|z - c|^2 / (2 w^2))).

    Parameters
    ----------
    store : EmbeddingStore
        Document embeddings looked up by doc id
    centres : dict
        query id -> (n, m) array of peak centres. The key ``None`` holds centres shared by
        every query
    width : float
    """
    kind = OracleKind.SYNTHETIC

    def __init__(self, store, centres, width=1.0, s_max=3, cache=None, model="synthetic"):
        super().__init__(model, s_max, cache)
        check_positive("width", width)
        self.store = store
        self.width = width
        self.centres = {key: np.atleast_2d(np.asarray(value, dtype=np.float64)) for key, value in centres.items()}

    @classmethod
    def from_store(cls, store, centre_store, **kwargs):
        """Centre ids of the form ``<query_id>#<tag>`` belong to one query; other ids are shared."""
        grouped = {}
        for centre_id in centre_store.ids:
            key = centre_id.rsplit("#", 1)[0] if "#" in centre_id else None
            grouped.setdefault(key, []).append(centre_store.vector(centre_id))
        return cls(store, {key: np.vstack(rows) for key, rows in grouped.items()}, **kwargs)

    def landscape(self, query_id, points):
        centres = [c for c in (self.centres.get(query_id), self.centres.get(None)) if c is not None]
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if not centres:
            return np.zeros(len(points))
        sq = cdist(points, np.vstack(centres), "sqeuclidean")
        return self.s_max * np.exp(-sq / (2 * self.width ** 2)).max(axis=1)

    def _score(self, req):
        values = self.landscape(req.query_id, self.store.vectors([doc.id for doc in req.docs]))
        return [int(v) for v in np.rint(values)]


UMBRELA_SYSTEM_PROMPT = """You are a search quality rater judging how relevant passages are to a query.
Grade every passage on this integer scale:
3 = The passage is dedicated to the query and contains the exact answer.
2 = The passage has some answer for the query, but the answer may be a bit unclear, or hidden amongst extraneous information.
1 = The passage seems related to the query but does not answer it.
0 = The passage has nothing to do with the query."""

_FORMAT_INSTRUCTION = ("Answer with a JSON array of exactly {n} integers between 0 and {s_max}, one per passage "
                       "in the order given, and nothing else.")

_STRICT_REMINDER = ("Your previous answer could not be read. Reply with ONLY a JSON array of exactly {n} integers "
                    "between 0 and {s_max}, for example {example}. No words, no code fences.")

_ARRAY = re.compile(r"\[[^\[\]]*\]")


def build_umbrela_messages(req, s_max=3):
    """Chat messages asking for one grade per document of ``req``."""
    passages = []
    for number, doc in enumerate(req.docs, start=1):
        text = f"{doc.title}\n{doc.text}".strip() if doc.title else doc.text
        passages.append(f"[{number}] {text}")
    user = (f"Query: {req.query_text}\n\nPassages:\n" + "\n\n".join(passages) + "\n\n"
            + _FORMAT_INSTRUCTION.format(n=len(req.docs), s_max=s_max))
    return [{"role": "system", "content": UMBRELA_SYSTEM_PROMPT}, {"role": "user", "content": user}]


def parse_grade_array(text, n):
    """
    First JSON array of integers in ``text``; it must hold exactly ``n`` values.

    Examples
    --------
    >>> parse_grade_array("Grades: [3, 0, 2]", 3)
    [3, 0, 2]
    """
    for match in _ARRAY.finditer(text):
        try:
            values = json.loads(match.group(0))
        except ValueError:
            continue
        if values and all(isinstance(v, (int, float)) and not isinstance(v, bool) and float(v).is_integer()
                          for v in values):
            if len(values) != n:
                raise OracleResponseError(f"Expected {n} grades, got {len(values)}: {match.group(0)}")
            return [int(v) for v in values]
    raise OracleResponseError(f"No JSON integer array in LLM reply: {text[:200]!r}")


class LLMOracle(RelevanceOracle):
    """Batched UMBRELA-rubric judgments from an HTTP chat endpoint, with one stricter reprompt."""
    kind = OracleKind.LLM_HTTP

    def __init__(self, client, s_max=3, cache=None):
        super().__init__(client.model, s_max, cache)
        self.client = client

    def _score(self, req):
        n = len(req.docs)
        messages = build_umbrela_messages(req, self.s_max)
        reply = self.client.chat(messages)
        try:
            return parse_grade_array(reply, n)
        except OracleResponseError as e:
            logger.warning("Unparseable grades for query %s (%s); reprompting", req.query_id, e)
        example = json.dumps([0] * n)
        messages = messages + [{"role": "assistant", "content": reply},
                               {"role": "user", "content": _STRICT_REMINDER.format(n=n, s_max=self.s_max,
                                                                                  example=example)}]
        return parse_grade_array(self.client.chat(messages), n)


def make_oracle(config, qrels=None, store=None, cache=None):
    """
    Build the oracle described by ``config``.

    Parameters
    ----------
    config : OracleConfig
    qrels : Qrels, optional
        Required for the simulated-qrels oracle
    store : EmbeddingStore, optional
        Required for the synthetic oracle
    cache : ScoreCache, optional
        Defaults to a cache on ``config.cache_path`` (in-memory if unset)
    """
    if cache is None:
        cache = ScoreCache(config.cache_path)
    if config.kind is OracleKind.SIMULATED_QRELS:
        if qrels is None:
            raise ConfigError("The simulated-qrels oracle needs qrels")
        return SimulatedQrelsOracle(qrels, config.noise_flip_prob, config.rng_seed, config.s_max, cache,
                                    model=config.model or "qrels")
    if config.kind is OracleKind.SYNTHETIC:
        if store is None or not config.landscape_embeddings or not config.landscape_manifest:
            raise ConfigError("The synthetic oracle needs document embeddings and landscape_embeddings/manifest")
        centres = load_embeddings(config.landscape_embeddings, config.landscape_manifest)
        return SyntheticOracle.from_store(store, centres, width=config.landscape_width, s_max=config.s_max,
                                          cache=cache, model=config.model or "synthetic")
    return LLMOracle(LLMClient.from_config(config), config.s_max, cache)


def documents_for(doc_ids, corpus=None):
    """Documents for a score request; texts are empty when no corpus is loaded."""
    if corpus is None:
        return tuple(Document(doc_id, "", "") for doc_id in doc_ids)
    return tuple(corpus.get(doc_id) or Document(doc_id, "", "") for doc_id in doc_ids)

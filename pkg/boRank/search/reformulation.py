"""
Query reformulations used as extra maximum-relevance seeds of the posterior.

Reformulations come from a JSONL file (``{"query_id": ..., "reformulations": [...]}``) or
are generated through an LLM endpoint. Their embeddings are produced by the external
encoder and ingested in the embedding binary format under ids ``<query_id>#r<i>`` (1-based).
"""
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from natsort import natsorted

from boRank.utils.errors import OracleResponseError, ReformulationError, UnknownQueryError, ReformulationWarning
from boRank.utils.utils import check_dimension, check_positive, unit_normalize

logger = logging.getLogger(__name__)

REFORMULATION_PROMPT = (
    "You help a search engine find every relevant document for a query. Write {Q} alternative search "
    "queries for the query below. Each should rephrase it or expand a different aspect of what the user "
    "is looking for. Answer with ONLY a JSON array of {Q} strings, no commentary.\n\nQuery: {query}"
)


def reformulation_id(query_id, i):
    """Manifest id of the ``i``-th (1-based) reformulation of ``query_id``."""
    return f"{query_id}#r{i}"


@dataclass(frozen=True)
class ReformulationSet:
    query_id: str
    texts: tuple = ()
    embeddings: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "texts", tuple(self.texts))
        if self.embeddings is not None:
            embeddings = np.atleast_2d(np.asarray(self.embeddings, dtype=np.float64))
            if len(self.texts) == 0:
                embeddings = embeddings.reshape(0, embeddings.shape[-1])
            if embeddings.shape[0] != len(self.texts):
                raise ReformulationError(f"Query {self.query_id}: {embeddings.shape[0]} reformulation embeddings "
                                         f"for {len(self.texts)} texts")
            embeddings.setflags(write=False)
            object.__setattr__(self, "embeddings", embeddings)

    def __len__(self):
        return len(self.texts)

    @property
    def ids(self):
        return [reformulation_id(self.query_id, i) for i in range(1, len(self.texts) + 1)]


def _clean(query_id, q0, texts, source):
    kept = []
    for text in texts:
        if not isinstance(text, str):
            raise ReformulationError(f"{source}: reformulation of query {query_id} is not a string: {text!r}")
        if not text.strip():
            raise ReformulationError(f"{source}: empty reformulation for query {query_id}")
        if q0 is not None and text.strip() == q0.strip():
            warnings.warn(ReformulationWarning(f"{source}: reformulation of query {query_id} repeats the query; "
                                               f"dropped"))
            continue
        kept.append(text)
    return kept


def load_reformulations(path=None, queries=None):
    """
    Read a reformulations JSONL file.

    Parameters
    ----------
    path : str or Path or None
        No path, or a path that does not exist, gives an empty map (initial-query only)
    queries : dict, optional
        {query_id: text}; when given, reformulations repeating the query text are dropped

    Returns
    -------
    sets : dict of str -> ReformulationSet
        Without embeddings; see ``attach_reformulation_embeddings``
    """
    if path is None or not Path(path).exists():
        if path is not None:
            logger.info("No reformulation file at %s; using the initial query only", path)
        return {}
    sets = {}
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                query_id = str(record["query_id"])
                texts = record["reformulations"]
            except (ValueError, KeyError, TypeError) as e:
                raise ReformulationError(f"{path}:{line_number}: malformed reformulation row ({e})") from None
            if not isinstance(texts, list):
                raise ReformulationError(f"{path}:{line_number}: 'reformulations' must be a list")
            q0 = queries.get(query_id) if queries else None
            sets[query_id] = ReformulationSet(query_id, _clean(query_id, q0, texts, f"{path}:{line_number}"))
    return sets


def write_reformulations(sets, path):
    """Write reformulation sets as JSONL, query ids in natural order."""
    with open(path, "w", encoding="utf-8") as f:
        for query_id in natsorted(sets):
            f.write(json.dumps({"query_id": query_id, "reformulations": list(sets[query_id].texts)}) + "\n")


def attach_reformulation_embeddings(sets, store, queries=None, normalize=True):
    """
    Attach embeddings looked up under ``<query_id>#r<i>`` in ``store``.

    Raises
    ------
    UnknownQueryError
        If a set's query id is not in ``queries``, or an embedding id is missing from ``store``.
    """
    attached = {}
    for query_id, refs in sets.items():
        if queries is not None and query_id not in queries:
            raise UnknownQueryError(query_id, "queries file (referenced by the reformulations)")
        for ref_id in refs.ids:
            if ref_id not in store:
                raise UnknownQueryError(ref_id, "reformulation embedding manifest")
        embeddings = store.vectors(refs.ids) if len(refs) else np.zeros((0, store.dim))
        if normalize and len(refs):
            embeddings = unit_normalize(embeddings)
        attached[query_id] = ReformulationSet(query_id, refs.texts, embeddings)
    return attached


def _parse_string_array(text):
    start = text.find("[")
    while start != -1:
        end = text.find("]", start)
        while end != -1:
            try:
                values = json.loads(text[start:end + 1])
            except ValueError:
                end = text.find("]", end + 1)
                continue
            if isinstance(values, list) and all(isinstance(v, str) for v in values):
                return values
            break
        start = text.find("[", start + 1)
    raise OracleResponseError(f"No JSON array of strings in LLM reply: {text[:200]!r}")


def _distinct(q0, candidates, have=()):
    seen = {t.strip().lower() for t in have} | {q0.strip().lower()}
    out = []
    for text in candidates:
        key = text.strip().lower()
        if key and key not in seen:
            seen.add(key)
            out.append(text.strip())
    return out


def generate_reformulations(client, q0, Q, query_id=""):
    """
    Ask the LLM for ``Q`` reformulations of ``q0``.

    Extra strings are truncated; duplicates are removed and topped up with one more request;
    a malformed reply is retried once. If still short, the set is returned smaller with a
    ``ReformulationWarning``.

    Parameters
    ----------
    client : LLMClient
    q0 : str
    Q : int
    query_id : str

    Returns
    -------
    refs : ReformulationSet
        Without embeddings
    """
    check_positive("Q", Q)
    messages = [{"role": "user", "content": REFORMULATION_PROMPT.format(Q=Q, query=q0)}]
    try:
        texts = _parse_string_array(client.chat(messages))
    except OracleResponseError:
        logger.warning("Malformed reformulation reply for query %s; retrying once", query_id)
        texts = _parse_string_array(client.chat(messages))

    if len(texts) > Q:
        warnings.warn(ReformulationWarning(f"Query {query_id}: LLM returned {len(texts)} reformulations, "
                                           f"keeping the first {Q}"))
        texts = texts[:Q]
    kept = _distinct(q0, texts)
    if len(kept) < Q:
        missing = Q - len(kept)
        try:
            extra = _parse_string_array(client.chat(
                [{"role": "user", "content": REFORMULATION_PROMPT.format(Q=missing, query=q0)
                  + "\nDo not repeat any of these: " + json.dumps(kept)}]))
            kept += _distinct(q0, extra, kept)[:missing]
        except OracleResponseError as e:
            logger.warning("Top-up request for query %s failed: %s", query_id, e)
    if len(kept) < Q:
        warnings.warn(ReformulationWarning(f"Query {query_id}: only {len(kept)} distinct reformulations "
                                           f"of {Q} requested"))
    return ReformulationSet(query_id, kept)


def seed_locations(query, refs=None):
    """The (1 + Q) x m seed matrix: the query embedding followed by the reformulation embeddings."""
    rows = [np.asarray(query.embedding, dtype=np.float64)]
    if refs is not None and len(refs):
        if refs.embeddings is None:
            raise ReformulationError(f"Query {query.id}: reformulations have no embeddings attached")
        check_dimension(len(rows[0]), refs.embeddings.shape[1], "reformulation embedding")
        rows.extend(refs.embeddings)
    return np.vstack(rows)

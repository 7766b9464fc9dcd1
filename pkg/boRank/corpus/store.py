"""
Corpus, query, qrels and embedding ingestion.

Embeddings are never computed here: they arrive as ``EMB1`` binaries produced by an
external encoder, together with a manifest listing one id per row.
"""
import json
import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from boRank.utils.errors import CorpusFormatError, DuplicateIdError, EmbeddingFormatError, QrelsFormatError, \
    UnknownQueryError, DuplicateQrelsWarning, NotNormalizedWarning
from boRank.utils.utils import check_dimension, lexicographic_ranks, rows_are_unit, unit_normalize

logger = logging.getLogger(__name__)

EMB_MAGIC = b"EMB1"
_HEADER_BYTES = 12
NORM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str


class Corpus:
    """Documents in file order, indexed by id."""

    def __init__(self, documents=()):
        self.documents = list(documents)
        self._index = {}
        for position, doc in enumerate(self.documents):
            if not doc.id:
                raise CorpusFormatError("<memory>", position + 1, "empty document id")
            if doc.id in self._index:
                raise DuplicateIdError(doc.id, self._index[doc.id] + 1, position + 1)
            self._index[doc.id] = position

    def __len__(self):
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def __contains__(self, doc_id):
        return doc_id in self._index

    def __getitem__(self, doc_id):
        return self.documents[self._index[doc_id]]

    def get(self, doc_id, default=None):
        position = self._index.get(doc_id)
        return default if position is None else self.documents[position]

    @property
    def ids(self):
        return [doc.id for doc in self.documents]


@dataclass(frozen=True)
class QueryRecord:
    id: str
    text: str
    embedding: np.ndarray = field(repr=False)


class EmbeddingStore:
    """
    Immutable |X| x m embedding matrix with its row ids.

    The matrix is kept as the little-endian float32 values read from disk so that
    ``write_embeddings`` reproduces the input byte for byte.

    Attributes
    ----------
    ids : tuple of str
    matrix : ndarray, shape (count, dim), float32, read-only
    dim : int
    normalized : bool
        True when every row norm is within 1e-4 of 1.
    """

    def __init__(self, ids, matrix, dim=None):
        matrix = np.asarray(matrix, dtype="<f4")
        if matrix.ndim != 2:
            if matrix.size == 0 and dim is not None:
                matrix = matrix.reshape(0, dim)
            else:
                raise EmbeddingFormatError(f"Embedding matrix must be 2-dimensional, got shape {matrix.shape}")
        self.dim = int(dim if dim is not None else matrix.shape[1])
        if self.dim <= 0:
            raise EmbeddingFormatError("Embedding dimension must be positive")
        check_dimension(self.dim, matrix.shape[1], "embedding matrix")
        if len(ids) != matrix.shape[0]:
            raise EmbeddingFormatError(f"Manifest lists {len(ids)} ids but the matrix has {matrix.shape[0]} rows")
        if not np.all(np.isfinite(matrix)):
            bad = int(np.argwhere(~np.isfinite(matrix))[0][0])
            raise EmbeddingFormatError(f"Non-finite value in row {bad} ('{ids[bad]}')")

        self.ids = tuple(ids)
        self._index = {}
        for row, doc_id in enumerate(self.ids):
            if doc_id in self._index:
                raise DuplicateIdError(doc_id, self._index[doc_id] + 1, row + 1, "manifest")
            self._index[doc_id] = row
        matrix.setflags(write=False)
        self.matrix = matrix
        self.normalized = rows_are_unit(matrix, NORM_TOLERANCE)

    def __len__(self):
        return len(self.ids)

    def __contains__(self, doc_id):
        return doc_id in self._index

    @property
    def shape(self):
        return self.matrix.shape

    def index_of(self, doc_id):
        return self._index[doc_id]

    def indices(self, doc_ids):
        return np.fromiter((self._index[d] for d in doc_ids), dtype=np.int64, count=len(doc_ids))

    def vector(self, doc_id):
        return self.matrix[self._index[doc_id]].astype(np.float64)

    def vectors(self, doc_ids):
        return self.matrix[self.indices(doc_ids)].astype(np.float64)

    @cached_property
    def id_ranks(self):
        """Lexicographic rank of each row's id (the doc-id tie-breaker)."""
        return lexicographic_ranks(self.ids)

    @cached_property
    def unit_matrix(self):
        """Row-normalised float64 copy, used for cosine similarity."""
        unit = unit_normalize(self.matrix)
        unit.setflags(write=False)
        return unit


def _read_jsonl(path):
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(path, line_number, f"malformed JSON ({e.msg})") from e
            if not isinstance(record, dict):
                raise CorpusFormatError(path, line_number, "record is not a JSON object")
            yield line_number, record


def _require(record, key, path, line_number):
    if key not in record:
        raise CorpusFormatError(path, line_number, f"missing required field '{key}'")
    return str(record[key])


def load_corpus(path):
    """
    Load a BEIR ``corpus.jsonl`` file.

    Parameters
    ----------
    path : str or Path
        JSONL file, one object per line with ``_id``, ``text`` and (optionally empty) ``title``.

    Returns
    -------
    corpus : Corpus
        Documents in file order.

    Examples
    --------
    >>> corpus = load_corpus("scifact/corpus.jsonl")
    >>> len(corpus)
    5183
    """
    documents = []
    seen = {}
    for line_number, record in _read_jsonl(path):
        doc_id = _require(record, "_id", path, line_number)
        text = _require(record, "text", path, line_number)
        if not doc_id:
            raise CorpusFormatError(path, line_number, "empty '_id'")
        if doc_id in seen:
            raise DuplicateIdError(doc_id, seen[doc_id], line_number, str(path))
        seen[doc_id] = line_number
        documents.append(Document(doc_id, str(record.get("title") or ""), text))
    logger.info("Loaded %d documents from %s", len(documents), path)
    return Corpus(documents)


def load_queries(path):
    """Load a BEIR ``queries.jsonl`` file into an ordered {query_id: text} dict."""
    queries = {}
    seen = {}
    for line_number, record in _read_jsonl(path):
        query_id = _require(record, "_id", path, line_number)
        if query_id in seen:
            raise DuplicateIdError(query_id, seen[query_id], line_number, str(path))
        seen[query_id] = line_number
        queries[query_id] = _require(record, "text", path, line_number)
    return queries


def attach_query_embeddings(queries, query_store, normalize=True):
    """
    Pair query texts with their embeddings.

    Query vectors are unit-normalised by default, like the document vectors.

    Returns
    -------
    records : dict of str -> QueryRecord
    """
    records = {}
    for query_id, text in queries.items():
        if query_id not in query_store:
            raise UnknownQueryError(query_id, "query embedding manifest")
        vector = query_store.vector(query_id)
        if normalize:
            vector = unit_normalize(vector)
        records[query_id] = QueryRecord(query_id, text, vector)
    return records


def _read_manifest(path):
    text = Path(path).read_text(encoding="utf-8")
    return text.split("\n")[:-1] if text.endswith("\n") else (text.split("\n") if text else [])


def load_embeddings(path, manifest):
    """
    Read an ``EMB1`` embedding binary and its id manifest.

    Layout: magic ``EMB1``, little-endian u32 count, little-endian u32 dim, then
    count*dim little-endian float32 values, row-major.

    Parameters
    ----------
    path : str or Path
        The binary file
    manifest : str or Path
        UTF-8 text, one id per line, LF-terminated

    Returns
    -------
    store : EmbeddingStore
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER_BYTES:
        raise EmbeddingFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    if raw[:4] != EMB_MAGIC:
        raise EmbeddingFormatError(f"{path}: magic mismatch (got {raw[:4]!r}, expected {EMB_MAGIC!r})")
    count, dim = (int(v) for v in np.frombuffer(raw, dtype="<u4", count=2, offset=4))
    expected = _HEADER_BYTES + 4 * count * dim
    if len(raw) < expected:
        raise EmbeddingFormatError(f"{path}: truncated payload ({len(raw) - _HEADER_BYTES} bytes, "
                                   f"expected {expected - _HEADER_BYTES} for {count}x{dim})")
    if len(raw) > expected:
        raise EmbeddingFormatError(f"{path}: {len(raw) - expected} trailing bytes after payload")

    ids = _read_manifest(manifest)
    if len(ids) != count:
        raise EmbeddingFormatError(f"{manifest}: manifest lists {len(ids)} ids, header count is {count}")

    matrix = np.frombuffer(raw, dtype="<f4", count=count * dim, offset=_HEADER_BYTES).reshape(count, dim)
    store = EmbeddingStore(ids, matrix, dim=dim)
    if not store.normalized:
        warnings.warn(NotNormalizedWarning(f"{path}: rows are not unit-normalised (tolerance {NORM_TOLERANCE})"))
    logger.info("Loaded %dx%d embeddings from %s (normalized=%s)", count, dim, path, store.normalized)
    return store


def write_embeddings(store, path, manifest):
    """Write ``store`` as an ``EMB1`` binary plus manifest (inverse of ``load_embeddings``)."""
    header = EMB_MAGIC + np.array([len(store), store.dim], dtype="<u4").tobytes()
    Path(path).write_bytes(header + np.ascontiguousarray(store.matrix, dtype="<f4").tobytes())
    Path(manifest).write_text("".join(f"{doc_id}\n" for doc_id in store.ids), encoding="utf-8")


class Qrels:
    """
    Graded relevance judgments, (query id, doc id) -> grade.

    Absent pairs have grade 0.
    """

    def __init__(self, grades=None, duplicates=0):
        self._grades = dict(grades or {})
        self.duplicates = duplicates
        self._by_query = {}
        for (query_id, doc_id), grade in self._grades.items():
            self._by_query.setdefault(query_id, {})[doc_id] = grade

    def __len__(self):
        return len(self._grades)

    def __eq__(self, other):
        return isinstance(other, Qrels) and self._grades == other._grades

    def __contains__(self, query_id):
        return query_id in self._by_query

    def items(self):
        return self._grades.items()

    @property
    def query_ids(self):
        return list(self._by_query)

    def grade(self, query_id, doc_id):
        return self._grades.get((query_id, doc_id), 0)

    def judged(self, query_id):
        return dict(self._by_query.get(query_id, {}))

    def relevant(self, query_id):
        """{doc_id: grade} for the documents with grade > 0."""
        return {d: g for d, g in self._by_query.get(query_id, {}).items() if g > 0}

    def unresolved(self, query_ids, doc_ids):
        """Pairs whose query or document id is unknown, for diagnostics."""
        query_ids, doc_ids = set(query_ids), set(doc_ids)
        return [(q, d) for (q, d) in self._grades if q not in query_ids or d not in doc_ids]


def load_qrels(path, format="beir-tsv"):
    """
    Load relevance judgments.

    Parameters
    ----------
    path : str or Path
    format : str
        ``"beir-tsv"`` (header ``query-id\\tcorpus-id\\tscore``) or ``"trec"`` (``qid 0 docid rel``).

    Returns
    -------
    qrels : Qrels
        Later duplicate rows overwrite earlier ones; ``qrels.duplicates`` counts them.
    """
    if format not in ("beir-tsv", "trec"):
        raise QrelsFormatError(path, 0, f"unknown qrels format '{format}'")

    grades = {}
    duplicates = 0
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            if format == "beir-tsv":
                parts = line.rstrip("\n").split("\t")
                if line_number == 1 and parts[0].strip() == "query-id":
                    continue
                if len(parts) != 3:
                    raise QrelsFormatError(path, line_number, f"expected 3 tab-separated fields, got {len(parts)}")
                query_id, doc_id, raw_grade = (p.strip() for p in parts)
            else:
                parts = line.split()
                if len(parts) != 4:
                    raise QrelsFormatError(path, line_number, f"expected 4 fields, got {len(parts)}")
                query_id, _, doc_id, raw_grade = parts
            try:
                grade = int(raw_grade)
            except ValueError:
                raise QrelsFormatError(path, line_number, f"non-integer grade '{raw_grade}'") from None
            if grade < 0:
                raise QrelsFormatError(path, line_number, f"negative grade {grade}")
            if (query_id, doc_id) in grades:
                duplicates += 1
            grades[(query_id, doc_id)] = grade

    if duplicates:
        warnings.warn(DuplicateQrelsWarning(f"{path}: {duplicates} duplicate qrels rows overwritten"))
    return Qrels(grades, duplicates)


def dot(a, b):
    """
    Inner product of two m-vectors. Equals cosine similarity for unit-norm inputs.

    Examples
    --------
    >>> dot([1, 2, 3], [4, 5, 6])
    32.0
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    check_dimension(len(a), len(b))
    return float(a @ b)

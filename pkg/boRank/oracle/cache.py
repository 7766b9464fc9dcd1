import json
import logging
import threading
import warnings
from pathlib import Path

from boRank.utils.errors import CacheCorruptWarning

logger = logging.getLogger(__name__)


class ScoreCache:
    """
    Write-through grade cache keyed by (query id, doc id, oracle kind, model).

    Backed by an append-only JSONL file when ``path`` is given, otherwise in-memory only.
    Writes are serialised so concurrent sessions can share one cache.
    """

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self._entries = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self):
        try:
            with open(self.path, encoding="utf-8") as f:
                for line in f:
                    if not line.strip():
                        continue
                    record = json.loads(line)
                    key = (record["query_id"], record["doc_id"], record["oracle_kind"], record["model"])
                    self._entries[key] = int(record["grade"])
        except (ValueError, KeyError, TypeError) as e:
            warnings.warn(CacheCorruptWarning(f"{self.path}: corrupt score cache ({e}); rebuilt empty"))
            self._entries = {}
            self.path.write_text("", encoding="utf-8")
        logger.debug("Loaded %d cached grades from %s", len(self._entries), self.path)

    def __len__(self):
        return len(self._entries)

    def lookup(self, query_id, doc_id, oracle_kind, model):
        return self._entries.get((query_id, doc_id, oracle_kind, model))

    def store_many(self, records):
        """Store ``(query_id, doc_id, oracle_kind, model, grade)`` tuples."""
        records = list(records)
        with self._lock:
            for query_id, doc_id, oracle_kind, model, grade in records:
                self._entries[(query_id, doc_id, oracle_kind, model)] = int(grade)
            if self.path is not None and records:
                with open(self.path, "a", encoding="utf-8") as f:
                    for query_id, doc_id, oracle_kind, model, grade in records:
                        f.write(json.dumps({"query_id": query_id, "doc_id": doc_id, "oracle_kind": oracle_kind,
                                            "model": model, "grade": int(grade)}) + "\n")

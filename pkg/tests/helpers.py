"""Fixture builders shared by the tests."""
import json

import numpy as np

from boRank.corpus.store import EmbeddingStore, QueryRecord, Qrels
from boRank.oracle.oracles import RelevanceOracle, OracleKind


def unit_rows(rng, n, dim):
    rows = rng.standard_normal((n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def make_store(matrix, prefix="d"):
    matrix = np.asarray(matrix, dtype=np.float64)
    return EmbeddingStore([f"{prefix}{i:03d}" for i in range(len(matrix))], matrix)


def make_query(vector, query_id="q1", text="a query"):
    return QueryRecord(query_id, text, np.asarray(vector, dtype=np.float64))


def random_qrels(rng, store, query_id="q1", relevant=30):
    chosen = rng.choice(len(store), size=relevant, replace=False)
    return Qrels({(query_id, store.ids[i]): int(rng.integers(1, 4)) for i in chosen})


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")


class ScriptedOracle(RelevanceOracle):
    """Returns grades from a function of the doc id; raises ``fail_with`` on call number ``fail_on``."""
    kind = OracleKind.SIMULATED_QRELS

    def __init__(self, grade=lambda doc_id: 0, fail_on=None, fail_with=None):
        super().__init__(model="scripted")
        self.grade = grade
        self.fail_on = fail_on
        self.fail_with = fail_with

    def _score(self, req):
        if self.fail_on is not None and self.calls + 1 == self.fail_on:
            raise self.fail_with
        return [self.grade(doc.id) for doc in req.docs]


class FakeResponse:
    def __init__(self, payload=None, status_code=200, text=None):
        self.payload = payload
        self.status_code = status_code
        self.text = text

    def raise_for_status(self):
        import requests
        if self.status_code >= 400:
            raise requests.exceptions.HTTPError(f"{self.status_code} error", response=self)

    def json(self):
        if self.payload is None:
            raise ValueError("no JSON")
        return self.payload


def chat_payload(text):
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}

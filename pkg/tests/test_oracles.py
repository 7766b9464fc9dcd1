
import numpy as np
import pytest
import requests

from boRank.corpus.store import Document, EmbeddingStore, Qrels, write_embeddings
from boRank.oracle.cache import ScoreCache
from boRank.oracle.llm_client import LLMClient
from boRank.oracle.oracles import (LLMOracle, OracleConfig, ScoreRequest, SimulatedQrelsOracle, SyntheticOracle,
                                   build_umbrela_messages, cache_lookup, make_oracle, parse_grade_array)
from boRank.utils.errors import (ConfigError, InvalidParameterError, OracleResponseError, OracleTransportError,
                                 CacheCorruptWarning, GradeClampedWarning)
from helpers import FakeResponse, chat_payload


def request(*doc_ids, query_id="q1"):
    return ScoreRequest(query_id, "what is relevance", [Document(d, "", f"text of {d}") for d in doc_ids])


def scripted_client(monkeypatch, replies, **kwargs):
    """LLM client whose POSTs return ``replies`` in turn (exceptions are raised)."""
    client = LLMClient("http://llm.invalid/v1/chat", "judge-model", max_retries=3, backoff_factor=0, **kwargs)
    bodies = []
    replies = list(replies)

    def post(url, json=None, headers=None, timeout=None):
        bodies.append(json)
        reply = replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply

    monkeypatch.setattr(client.session, "post", post)
    return client, bodies


class TestScoreRequest:
    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            ScoreRequest("q1", "text", [])
        with pytest.raises(InvalidParameterError):
            request("d1", "d1")
        assert request("d1", "d2").batch_size == 2


class TestSimulatedQrels:
    def test_grades(self):
        oracle = SimulatedQrelsOracle(Qrels({("q1", "d1"): 2}))
        assert oracle.score_batch(request("d1", "d2")) == [2, 0]

    def test_high_grades_are_clamped(self):
        oracle = SimulatedQrelsOracle(Qrels({("q1", "d1"): 5}))
        with pytest.warns(GradeClampedWarning):
            assert oracle.score_batch(request("d1")) == [3]
        assert oracle.clamped == 1

    def test_order_independent(self):
        qrels = Qrels({("q1", f"d{i}"): i % 4 for i in range(10)})
        oracle = SimulatedQrelsOracle(qrels)
        forward = oracle.score_batch(request(*[f"d{i}" for i in range(10)]))
        backward = oracle.score_batch(request(*[f"d{i}" for i in reversed(range(10))]))
        assert forward == list(reversed(backward))

    def test_noise_rate(self):
        doc_ids = [f"d{i}" for i in range(10000)]
        oracle = SimulatedQrelsOracle(Qrels({("q1", d): 2 for d in doc_ids}), noise_flip_prob=0.3, rng_seed=1)
        grades = np.array(oracle.score_batch(request(*doc_ids)))
        assert abs(np.mean(grades != 2) - 0.3) <= 0.02
        assert set(np.unique(grades)) <= {0, 1, 2, 3}

    def test_noise_is_seeded_per_query(self):
        qrels = Qrels({("q1", f"d{i}"): 1 for i in range(50)})
        grades = [SimulatedQrelsOracle(qrels, 0.5, rng_seed=4).score_batch(request(*[f"d{i}" for i in range(50)]))
                  for _ in range(2)]
        assert grades[0] == grades[1]


class TestSynthetic:
    def test_peak(self):
        store = EmbeddingStore(["d1", "d2"], [[1.0, 0.0], [0.0, 1.0]])
        oracle = SyntheticOracle(store, {None: [[1.0, 0.0]]})
        # d2: 3 exp(-2 / 2) = 1.10 -> 1
        assert oracle.score_batch(request("d1", "d2")) == [3, 1]

    def test_per_query_centres(self):
        store = EmbeddingStore(["d1", "d2"], [[1.0, 0.0], [0.0, 1.0]])
        centres = EmbeddingStore(["q1#a", "q2#a"], [[1.0, 0.0], [0.0, 1.0]])
        oracle = SyntheticOracle.from_store(store, centres, width=0.3)
        assert oracle.score_batch(request("d1", "d2", query_id="q1")) == [3, 0]
        assert oracle.score_batch(request("d1", "d2", query_id="q2")) == [0, 3]
        assert oracle.score_batch(request("d1", query_id="q3")) == [0]


class TestCache:
    def test_write_through(self, tmp_path):
        cache = ScoreCache(tmp_path / "cache.jsonl")
        oracle = SimulatedQrelsOracle(Qrels({("q1", "d1"): 2}), cache=cache)
        assert cache_lookup(oracle, "q1", "d1") is None
        oracle.score_batch(request("d1"))
        assert cache_lookup(oracle, "q1", "d1") == 2
        reloaded = ScoreCache(tmp_path / "cache.jsonl")
        assert reloaded.lookup("q1", "d1", "simulated-qrels", "qrels") == 2

    def test_models_are_independent(self):
        cache = ScoreCache()
        cache.store_many([("q1", "d1", "llm-http", "model-a", 3)])
        assert cache.lookup("q1", "d1", "llm-http", "model-a") == 3
        assert cache.lookup("q1", "d1", "llm-http", "model-b") is None

    def test_warm_cache_skips_scoring(self):
        cache = ScoreCache()
        oracle = SimulatedQrelsOracle(Qrels({("q1", "d1"): 1}), cache=cache)
        oracle.score_batch(request("d1", "d2"))
        oracle.score_batch(request("d2", "d1"))
        assert oracle.calls == 1
        oracle.score_batch(request("d1", "d3"))
        assert oracle.calls == 2

    def test_corrupt_file_is_rebuilt(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        path.write_text('{"query_id": "q1", "doc_id": "d1", "oracle_kind": "x", "model": "m", "grade": 1}\nnot json\n')
        with pytest.warns(CacheCorruptWarning):
            cache = ScoreCache(path)
        assert len(cache) == 0
        assert path.read_text() == ""


class TestLLMOracle:
    def test_batched_grades(self, monkeypatch):
        client, bodies = scripted_client(monkeypatch, [FakeResponse(chat_payload("Grades: [3, 0, 2]"))])
        oracle = LLMOracle(client)
        assert oracle.score_batch(request("d1", "d2", "d3")) == [3, 0, 2]
        body = bodies[0]
        assert body["model"] == "judge-model"
        assert body["temperature"] == 0
        assert "[3] text of d3" in body["messages"][-1]["content"]
        assert "dedicated to the query" in body["messages"][0]["content"]

    def test_reprompt_once(self, monkeypatch):
        client, bodies = scripted_client(monkeypatch, [FakeResponse(chat_payload("I think they are relevant")),
                                                       FakeResponse(chat_payload("[1, 2]"))])
        assert LLMOracle(client).score_batch(request("d1", "d2")) == [1, 2]
        assert len(bodies) == 2
        assert "previous answer" in bodies[1]["messages"][-1]["content"]

    def test_persistent_malformed_output(self, monkeypatch):
        client, _ = scripted_client(monkeypatch, [FakeResponse(chat_payload("[1]")),
                                                  FakeResponse(chat_payload("[1, 2, 3]"))])
        with pytest.raises(OracleResponseError):
            LLMOracle(client).score_batch(request("d1", "d2"))

    def test_out_of_range_grades_clamped(self, monkeypatch):
        client, _ = scripted_client(monkeypatch, [FakeResponse(chat_payload("[7, -1]"))])
        oracle = LLMOracle(client)
        with pytest.warns(GradeClampedWarning):
            assert oracle.score_batch(request("d1", "d2")) == [3, 0]
        assert oracle.clamped == 2

    def test_transport_retries_then_fails(self, monkeypatch):
        failure = requests.exceptions.ConnectionError("unreachable")
        client, bodies = scripted_client(monkeypatch, [failure] * 4)
        with pytest.raises(OracleTransportError):
            LLMOracle(client).score_batch(request("d1"))
        assert client.transport_calls == 4

    def test_transient_failure_recovers(self, monkeypatch):
        client, _ = scripted_client(monkeypatch, [requests.exceptions.Timeout("slow"),
                                                  FakeResponse(chat_payload("[2]"))])
        assert LLMOracle(client).score_batch(request("d1")) == [2]

    def test_client_errors_are_not_retried(self, monkeypatch):
        client, _ = scripted_client(monkeypatch, [FakeResponse(status_code=401)])
        with pytest.raises(OracleTransportError):
            client.chat([{"role": "user", "content": "hi"}])
        assert client.transport_calls == 1

    def test_custom_response_path(self, monkeypatch):
        client, _ = scripted_client(monkeypatch, [FakeResponse({"output": {"text": "[0]"}})],
                                    response_path=["output", "text"])
        assert client.chat([{"role": "user", "content": "hi"}]) == "[0]"

    def test_api_key_header(self, monkeypatch):
        monkeypatch.setenv("BORANK_API_KEY", "secret")
        client = LLMClient("http://llm.invalid", "m")
        assert client._headers()["Authorization"] == "Bearer secret"


class TestParsing:
    def test_first_integer_array(self):
        assert parse_grade_array('Sure! ["a"] then [2, 3]', 2) == [2, 3]

    def test_wrong_length(self):
        with pytest.raises(OracleResponseError, match="Expected 3"):
            parse_grade_array("[1, 2]", 3)

    def test_prompt_numbers_passages(self):
        messages = build_umbrela_messages(request("d1", "d2"))
        assert "[1] text of d1" in messages[1]["content"]
        assert "exactly 2 integers" in messages[1]["content"]


class TestFactory:
    def test_endpoint_iff_llm(self):
        with pytest.raises(ConfigError):
            OracleConfig(kind="llm-http")
        with pytest.raises(ConfigError):
            OracleConfig(kind="simulated-qrels", endpoint="http://x")
        assert OracleConfig(kind="llm-http", endpoint="http://x").endpoint == "http://x"

    def test_simulated_needs_qrels(self):
        with pytest.raises(ConfigError):
            make_oracle(OracleConfig())
        assert isinstance(make_oracle(OracleConfig(), qrels=Qrels()), SimulatedQrelsOracle)

    def test_synthetic_from_files(self, tmp_path):
        store = EmbeddingStore(["d1", "d2"], [[1.0, 0.0], [0.0, 1.0]])
        write_embeddings(EmbeddingStore(["peak"], [[0.0, 1.0]]), tmp_path / "l.emb", tmp_path / "l.ids")
        config = OracleConfig(kind="synthetic", landscape_embeddings=str(tmp_path / "l.emb"),
                              landscape_manifest=str(tmp_path / "l.ids"))
        oracle = make_oracle(config, store=store)
        assert oracle.score_batch(request("d1", "d2")) == [1, 3]

    def test_llm(self):
        oracle = make_oracle(OracleConfig(kind="llm-http", endpoint="http://llm.invalid", model="m"))
        assert isinstance(oracle, LLMOracle)
        assert oracle.model == "m"

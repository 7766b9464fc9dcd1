import numpy as np
import pytest

from boRank.corpus.synthetic import make_two_cluster
from boRank.gp.posterior import GpPosterior, Observation, Provenance
from boRank.oracle.oracles import SimulatedQrelsOracle
from boRank.search.acquisition import AcquisitionConfig
from boRank.search.baselines import dense_rank
from boRank.search.reformulation import ReformulationSet
from boRank.search.session import RetrievalSession, SessionConfig, rank, run_session, seed_posterior
from boRank.utils.errors import DimensionMismatchError, InvalidParameterError, OracleTransportError
from helpers import ScriptedOracle, make_query, make_store, random_qrels, unit_rows


@pytest.fixture
def query(rng):
    return make_query(unit_rows(rng, 1, 8)[0])


class TestSeeding:
    def test_initial_query(self, query):
        posterior = seed_posterior(query, None, SessionConfig())
        assert len(posterior) == 1
        assert posterior.observations[0].value == 3
        assert posterior.observations[0].provenance is Provenance.INITIAL_QUERY
        assert posterior.predict_mean(query.embedding)[0] == pytest.approx(1.5, abs=1e-12)

    def test_reformulations(self, query, rng):
        refs = ReformulationSet("q1", ["a", "b", "c", "d"], unit_rows(rng, 4, 8))
        posterior = seed_posterior(query, refs, SessionConfig(variant="QR"))
        assert len(posterior) == 5
        assert all(obs.value == 3 for obs in posterior.observations)
        assert [obs.provenance for obs in posterior.observations[1:]] == [Provenance.REFORMULATION] * 4
        assert len(seed_posterior(query, refs, SessionConfig(variant="IQ"))) == 1

    def test_dimension_mismatch(self, query):
        with pytest.raises(DimensionMismatchError):
            seed_posterior(query, None, SessionConfig(), dim=4)

    def test_config_validation(self):
        with pytest.raises(InvalidParameterError):
            SessionConfig(output_k=0)
        config = SessionConfig(batch_size=4, acquisition=AcquisitionConfig(batch_size=10))
        assert config.acquisition.batch_size == 4


class TestSession:
    def test_budget_accounting(self, random_store, query, rng):
        oracle = SimulatedQrelsOracle(random_qrels(rng, random_store))
        trace = run_session(query, None, random_store, oracle, SessionConfig(budget=100, batch_size=10))
        assert oracle.calls == 10
        assert len(trace.observed) == len(set(trace.observed)) == 100
        assert trace.status == "completed"
        assert len(trace.ranking) == 100

    def test_budget_exceeds_corpus(self, query, rng):
        store = make_store(unit_rows(rng, 7, 8))
        trace = run_session(query, None, store, ScriptedOracle(), SessionConfig(budget=10, batch_size=10))
        assert [len(batch.doc_ids) for batch in trace.batches] == [7]

    def test_partial_last_batch(self, random_store, query):
        trace = run_session(query, None, random_store, ScriptedOracle(), SessionConfig(budget=25, batch_size=10))
        assert [len(batch.doc_ids) for batch in trace.batches] == [10, 10, 5]

    @pytest.mark.parametrize("strategy", ["top_b", "kriging_believer", "mmr"])
    def test_variance_shrinks_at_observed_docs(self, random_store, query, rng, strategy):
        oracle = SimulatedQrelsOracle(random_qrels(rng, random_store))
        config = SessionConfig(budget=40, batch_size=8, acquisition=AcquisitionConfig(batch_strategy=strategy))
        session = RetrievalSession(query, None, random_store, oracle, config)
        observed = []
        while True:
            before = session.posterior.predict_variance(random_store.vectors(observed)) if observed else None
            record = session.step()
            if record is None:
                break
            if observed:
                after = session.posterior.predict_variance(random_store.vectors(observed))
                assert np.all(after <= before + 1e-9)
            observed += record.doc_ids
        assert len(observed) == len(set(observed)) == 40

    def test_anytime_ranking(self, random_store, query):
        session = RetrievalSession(query, None, random_store, ScriptedOracle(), SessionConfig(budget=30))
        first = session.ranking(10)
        session.step()
        second = session.ranking(10)
        assert len(first) == len(second) == 10
        scores = [score for _, score in second]
        assert scores == sorted(scores, reverse=True)

    def test_rerun_is_byte_identical(self, random_store, query, rng, tmp_path):
        qrels = random_qrels(rng, random_store)
        config = SessionConfig(budget=30, batch_size=10)
        for name in ("a", "b"):
            oracle = SimulatedQrelsOracle(qrels, noise_flip_prob=0.2, rng_seed=5)
            run_session(query, None, random_store, oracle, config).write(tmp_path / f"{name}.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_random_acquisition_covers_corpus(self, query, rng):
        store = make_store(unit_rows(rng, 45, 8))
        config = SessionConfig(budget=45, batch_size=10, acquisition=AcquisitionConfig(kind="random", rng_seed=3))
        trace = run_session(query, None, store, ScriptedOracle(), config)
        assert sorted(trace.observed) == sorted(store.ids)

    def test_empty_reformulations_match_initial_query(self, random_store, query, rng):
        qrels = random_qrels(rng, random_store)
        config = SessionConfig(budget=30)
        iq = run_session(query, None, random_store, SimulatedQrelsOracle(qrels), config)
        qr = run_session(query, ReformulationSet("q1", [], np.zeros((0, 8))), random_store,
                         SimulatedQrelsOracle(qrels), SessionConfig(variant="QR", budget=30))
        assert list(iq.events()) == list(qr.events())

    def test_oracle_failure_marks_trace(self, random_store, query):
        oracle = ScriptedOracle(fail_on=3, fail_with=OracleTransportError("endpoint down"))
        trace = run_session(query, None, random_store, oracle, SessionConfig(budget=50))
        assert trace.status == "failed"
        assert len(trace.batches) == 2
        assert "endpoint down" in trace.error
        assert len(trace.ranking) == 100
        assert list(trace.events())[-1]["status"] == "failed"

    def test_timings(self, random_store, query):
        trace = run_session(query, None, random_store, ScriptedOracle(), SessionConfig(budget=20))
        timings = trace.timings()
        assert set(timings) == {"acquire", "oracle", "insert", "llm", "total"}
        assert timings["total"] >= timings["llm"] >= 0
        assert all("seconds" not in event for event in trace.events())


class TestRank:
    def test_zero_budget_matches_dense_order(self, rng):
        store = make_store(unit_rows(rng, 100, 16))
        q = make_query(unit_rows(rng, 1, 16)[0])
        trace = run_session(q, None, store, ScriptedOracle(), SessionConfig(budget=0, output_k=100))
        assert trace.batches == []
        assert [d for d, _ in trace.ranking] == [d for d, _ in dense_rank(q, store, 100)]

    def test_k_larger_than_corpus(self, rng):
        store = make_store(unit_rows(rng, 5, 3))
        posterior = GpPosterior.from_observations([Observation(store.vector("d000"), 3.0, Provenance.INITIAL_QUERY)])
        assert [d for d, _ in rank(posterior, store, 50)][0] == "d000"
        assert len(rank(posterior, store, 50)) == 5
        with pytest.raises(InvalidParameterError):
            rank(posterior, store, 0)

    def test_graded_doc_ranks_first(self):
        store = make_store(np.eye(3))
        posterior = GpPosterior.from_observations(
            [Observation(store.vector(d), g, Provenance.ORACLE, d) for d, g in [("d000", 0), ("d001", 3), ("d002", 0)]])
        ranking = rank(posterior, store, 3)
        assert ranking[0][0] == "d001"
        assert ranking[0][1] > ranking[1][1]
        assert {d for d, _ in ranking[1:]} == {"d000", "d002"}


class TestFarMode:
    @pytest.mark.parametrize("seed", [0, 1])
    def test_ucb_reaches_second_cluster(self, seed):
        data = make_two_cluster(seed=seed, cluster_size=10, background=180, clumps=1)
        q = data.query_records["q1"]
        far = {d for d, label in data.labels.items() if label == "B"}
        dense = [d for d, _ in dense_rank(q, data.store, 30)]
        assert not far & set(dense)
        trace = run_session(q, None, data.store, data.oracle(), SessionConfig(budget=30, batch_size=10))
        assert far & set(trace.observed)

import numpy as np
import pytest

from boRank.corpus.synthetic import make_two_cluster, write_dataset
from boRank.evaluation.metrics import recall_at_k
from boRank.search.acquisition import AcquisitionConfig
from boRank.search.baselines import dense_rank
from boRank.search.session import SessionConfig, run_session


def test_layout():
    data = make_two_cluster(seed=3)
    assert len(data.store) == 2000
    assert data.store.normalized
    assert len(data.qrels.relevant("q1")) == 40
    assert {data.labels[d] for d in data.qrels.relevant("q1")} == {"A", "B"}
    assert np.linalg.norm(data.query_records["q1"].embedding) == pytest.approx(1.0, abs=1e-6)
    assert np.array_equal(make_two_cluster(seed=3).store.matrix, data.store.matrix)


def test_oracle_matches_qrels():
    data = make_two_cluster(seed=1, cluster_size=10, background=180, clumps=1)
    oracle = data.oracle()
    for doc_id in data.store.ids[:50]:
        expected = data.qrels.grade("q1", doc_id)
        assert oracle.landscape("q1", data.store.vector(doc_id)[None]).round()[0] == expected


def test_write_dataset(tmp_path):
    paths = write_dataset(make_two_cluster(seed=0, cluster_size=5, background=30, clumps=2), tmp_path)
    assert all((tmp_path / name).exists() for name in ("corpus.jsonl", "corpus.emb", "qrels.tsv", "experiment.json"))
    assert set(paths) >= {"corpus", "embeddings", "landscape_embeddings", "config"}


def test_exploration_beats_dense():
    """Over 20 seeds: dense finds only the query's cluster, sessions also find the far one."""
    dense, iq, qr = [], [], []
    for seed in range(20):
        data = make_two_cluster(seed=seed)
        q, refs = data.query_records["q1"], data.reformulations["q1"]
        dense.append(recall_at_k(dense_rank(q, data.store, 100), data.qrels, "q1", 100))
        config = SessionConfig(budget=100, batch_size=10, acquisition=AcquisitionConfig(kind="ucb"))
        iq.append(recall_at_k(run_session(q, None, data.store, data.oracle(), config).ranking, data.qrels, "q1", 100))
        qr_config = SessionConfig(variant="QR", budget=100, batch_size=10, acquisition=config.acquisition)
        qr.append(recall_at_k(run_session(q, refs, data.store, data.oracle(), qr_config).ranking,
                              data.qrels, "q1", 100))
    assert np.mean(dense) <= 0.55
    assert np.mean(iq) > np.mean(dense)
    assert np.mean(qr) >= 0.9

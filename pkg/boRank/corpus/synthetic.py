"""
Deterministic two-cluster benchmark.

Unit vectors in R^dim: two relevance clusters around orthogonal centres A = e0 and B = e1,
the query inside A only, and background documents in a few tight clumps that sit between
the query and nothing relevant (dot with the query around 0.6, grade 0). Dense retrieval
of the query finds cluster A and then the clumps; cluster B is only reachable by exploring.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from boRank.corpus.store import Corpus, Document, EmbeddingStore, QueryRecord, Qrels, write_embeddings
from boRank.oracle.oracles import SyntheticOracle
from boRank.search.reformulation import ReformulationSet, reformulation_id, write_reformulations
from boRank.utils.utils import check_positive, unit_normalize

logger = logging.getLogger(__name__)

QUERY_ID = "q1"
CLUSTER_COS = (0.955, 0.99)
CLUMP_COS = (0.98, 0.995)
QUERY_COS = 0.985
CLUMP_ELEVATION = 0.6  # component of every clump centre along e0


@dataclass
class SyntheticDataset:
    corpus: Corpus
    store: EmbeddingStore
    queries: dict
    query_records: dict
    reformulations: dict
    centres: EmbeddingStore
    qrels: Qrels
    width: float
    labels: dict = field(default_factory=dict)  # doc id -> "A", "B" or "clump<j>"

    def oracle(self, cache=None):
        """Synthetic-landscape oracle whose grades match ``qrels``."""
        return SyntheticOracle.from_store(self.store, self.centres, width=self.width, cache=cache)


def _around(rng, centre, cos_range, basis):
    """Unit vector at a random cosine in ``cos_range`` from ``centre``, perturbed within ``basis`` columns."""
    direction = basis @ rng.standard_normal(basis.shape[1])
    direction -= (direction @ centre) * centre
    direction /= np.linalg.norm(direction)
    cos = rng.uniform(*cos_range) if np.ndim(cos_range) else cos_range
    return cos * centre + np.sqrt(1 - cos ** 2) * direction


def make_two_cluster(seed=0, dim=32, cluster_size=20, background=1960, clumps=3, width=np.sqrt(0.125)):
    """
    Build the benchmark in memory.

    Parameters
    ----------
    seed : int
    dim : int
        At least 4
    cluster_size : int
        Relevant documents per cluster
    background : int
        Irrelevant documents, split over ``clumps`` tight clumps
    clumps : int
    width : float
        Landscape width; grades are round(3 exp(-|z - c|^2 / (2 width^2))) for c in {A, B}

    Returns
    -------
    dataset : SyntheticDataset
        One query, ``q1``, with one reformulation embedded inside cluster B
    """
    if dim < 4:
        raise ValueError("dim must be at least 4")
    check_positive("cluster_size", cluster_size)
    check_positive("clumps", clumps)
    rng = np.random.default_rng(seed)
    eye = np.eye(dim)
    centre_a, centre_b = eye[0], eye[1]
    side = eye[:, 2:]  # perturbations stay orthogonal to both centres

    rows, labels = [], []
    for label, centre in (("A", centre_a), ("B", centre_b)):
        rows += [_around(rng, centre, CLUSTER_COS, side) for _ in range(cluster_size)]
        labels += [label] * cluster_size
    sizes = np.full(clumps, background // clumps)
    sizes[:background % clumps] += 1
    for j, size in enumerate(sizes):
        lateral = side @ rng.standard_normal(side.shape[1])
        lateral /= np.linalg.norm(lateral)
        clump_centre = CLUMP_ELEVATION * centre_a + np.sqrt(1 - CLUMP_ELEVATION ** 2) * lateral
        rows += [_around(rng, clump_centre, CLUMP_COS, side) for _ in range(size)]
        labels += [f"clump{j}"] * int(size)

    order = rng.permutation(len(rows))
    ids = [f"d{i:04d}" for i in range(len(rows))]
    matrix = np.vstack(rows)[order]
    labels = {ids[i]: labels[order[i]] for i in range(len(rows))}
    store = EmbeddingStore(ids, matrix)

    query = _around(rng, centre_a, QUERY_COS, side)
    reformulation = _around(rng, centre_b, QUERY_COS, side)
    query_store = EmbeddingStore([QUERY_ID], query[None])
    centres = EmbeddingStore(["A", "B"], np.vstack([centre_a, centre_b]))

    landscape = SyntheticOracle.from_store(store, centres, width=width).landscape(QUERY_ID, store.matrix)
    grades = {(QUERY_ID, doc_id): int(g) for doc_id, g in zip(ids, np.rint(landscape)) if g > 0}
    corpus = Corpus(Document(doc_id, "", f"synthetic document {doc_id} ({labels[doc_id]})") for doc_id in ids)
    text = "synthetic query near cluster A"
    query_record = QueryRecord(QUERY_ID, text, unit_normalize(query_store.vector(QUERY_ID)))
    refs = ReformulationSet(QUERY_ID, ["synthetic reformulation near cluster B"],
                            unit_normalize(reformulation[None].astype(np.float32)))
    logger.info("Synthetic benchmark: %d documents, %d relevant", len(ids), len(grades))
    return SyntheticDataset(corpus=corpus, store=store, queries={QUERY_ID: text},
                            query_records={QUERY_ID: query_record},
                            reformulations={QUERY_ID: refs}, centres=centres, qrels=Qrels(grades), width=width,
                            labels=labels)


def write_dataset(dataset, directory):
    """
    Write the benchmark in the on-disk formats the pipeline reads, plus an experiment config.

    Returns
    -------
    paths : dict
        Name -> path of every file written
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {name: str(directory / filename) for name, filename in (
        ("corpus", "corpus.jsonl"), ("queries", "queries.jsonl"), ("qrels", "qrels.tsv"),
        ("embeddings", "corpus.emb"), ("manifest", "corpus.ids"),
        ("query_embeddings", "queries.emb"), ("query_manifest", "queries.ids"),
        ("reformulations", "reformulations.jsonl"),
        ("reformulation_embeddings", "reformulations.emb"), ("reformulation_manifest", "reformulations.ids"),
        ("landscape_embeddings", "landscape.emb"), ("landscape_manifest", "landscape.ids"),
        ("config", "experiment.json"))}

    with open(paths["corpus"], "w", encoding="utf-8") as f:
        for doc in dataset.corpus:
            f.write(json.dumps({"_id": doc.id, "title": doc.title, "text": doc.text}) + "\n")
    with open(paths["queries"], "w", encoding="utf-8") as f:
        for query_id, text in dataset.queries.items():
            f.write(json.dumps({"_id": query_id, "text": text}) + "\n")
    with open(paths["qrels"], "w", encoding="utf-8") as f:
        f.write("query-id\tcorpus-id\tscore\n")
        for (query_id, doc_id), grade in sorted(dataset.qrels.items()):
            f.write(f"{query_id}\t{doc_id}\t{grade}\n")

    write_embeddings(dataset.store, paths["embeddings"], paths["manifest"])
    query_ids = list(dataset.query_records)
    write_embeddings(EmbeddingStore(query_ids, np.vstack([dataset.query_records[q].embedding for q in query_ids])),
                     paths["query_embeddings"], paths["query_manifest"])
    ref_ids = [reformulation_id(q, i) for q, refs in dataset.reformulations.items() for i in range(1, len(refs) + 1)]
    write_embeddings(EmbeddingStore(ref_ids, np.vstack([refs.embeddings for refs in dataset.reformulations.values()])),
                     paths["reformulation_embeddings"], paths["reformulation_manifest"])
    write_reformulations(dataset.reformulations, paths["reformulations"])
    write_embeddings(dataset.centres, paths["landscape_embeddings"], paths["landscape_manifest"])

    config = {
        "dataset": {"name": "synthetic", **{key: paths[key] for key in (
            "corpus", "queries", "qrels", "embeddings", "manifest", "query_embeddings", "query_manifest",
            "reformulations", "reformulation_embeddings", "reformulation_manifest")}},
        "method": {"name": "bo", "session": {"variant": "IQ", "budget": 100, "batch_size": 10}},
        "oracle": {"kind": "synthetic", "landscape_embeddings": paths["landscape_embeddings"],
                   "landscape_manifest": paths["landscape_manifest"], "landscape_width": float(dataset.width)},
        "output_dir": str(directory / "runs"),
        "run_tag": "synthetic",
        "seed": 0,
    }
    with open(paths["config"], "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2)
    return paths

"""
Recall@k and NDCG@k over graded qrels, and their aggregation over a run.

Metrics are fractions in [0, 1]; reports multiply by 100.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from natsort import natsorted

from boRank.utils.errors import NoRelevantDocumentsError
from boRank.utils.utils import check_positive

logger = logging.getLogger(__name__)

GAINS = ("exponential", "linear")


def _doc_ids(ranking):
    return [entry[0] if isinstance(entry, (tuple, list)) else entry for entry in ranking]


def recall_at_k(ranking, qrels, q, k):
    """
    Fraction of the relevant documents (grade > 0) of query ``q`` in the top ``k``.

    Parameters
    ----------
    ranking : list of str or list of (str, float)
    qrels : Qrels
    q : str
        Query id
    k : int

    Raises
    ------
    NoRelevantDocumentsError
        If ``q`` has no document with grade > 0.

    Examples
    --------
    Relevant {d1, d2, d3} and ranking [d1, d2, d9]: ``recall_at_k(ranking, qrels, q, 2)`` is 2/3.
    """
    check_positive("k", k)
    relevant = qrels.relevant(q)
    if not relevant:
        raise NoRelevantDocumentsError(q)
    hits = sum(1 for doc_id in set(_doc_ids(ranking)[:k]) if doc_id in relevant)
    return hits / len(relevant)


def _gain(grades, gain):
    grades = np.asarray(grades, dtype=np.float64)
    return grades if gain == "linear" else np.power(2.0, grades) - 1.0


def _dcg(grades, gain):
    if len(grades) == 0:
        return 0.0
    discounts = np.log2(np.arange(2, len(grades) + 2))
    return float(np.sum(_gain(grades, gain) / discounts))


def ndcg_at_k(ranking, qrels, q, k, gain="exponential"):
    """
    Normalised discounted cumulative gain of the top ``k``, log2 discount.

    ``gain="exponential"`` uses 2^g - 1 (trec_eval convention), ``gain="linear"`` uses g.

    Examples
    --------
    Ranked grades [3, 0, 2] with no other relevant document: DCG = 7 + 0 + 3/2 = 8.5,
    IDCG = 7 + 3/log2(3), NDCG@3 = 0.9558.
    """
    check_positive("k", k)
    if gain not in GAINS:
        raise ValueError(f"gain must be one of {GAINS}, got {gain}")
    judged = qrels.judged(q)
    if not any(g > 0 for g in judged.values()):
        raise NoRelevantDocumentsError(q)
    ranked = [judged.get(doc_id, 0) for doc_id in _doc_ids(ranking)[:k]]
    ideal = sorted((g for g in judged.values() if g > 0), reverse=True)[:k]
    return _dcg(ranked, gain) / _dcg(ideal, gain)


def metric_name(metric, k):
    return f"{'R' if metric == 'recall' else 'N'}@{k}"


@dataclass
class MetricReport:
    """
    Per-query and mean metrics of one run.

    Attributes
    ----------
    per_query : dict
        query id -> {metric name -> value}, e.g. {"R@100": 0.5, "N@10": 0.31}
    means : dict
        metric name -> arithmetic mean over evaluated queries
    seconds : dict
        {"llm", "total"} mean seconds per query, empty when no timings were given
    skipped_unjudged : int
        Run queries absent from the qrels
    skipped_no_relevant : int
        Run queries whose qrels hold no relevant document
    """
    per_query: dict = field(default_factory=dict)
    means: dict = field(default_factory=dict)
    seconds: dict = field(default_factory=dict)
    skipped_unjudged: int = 0
    skipped_no_relevant: int = 0

    def to_dict(self):
        return {"means": self.means, "seconds": self.seconds, "queries": len(self.per_query),
                "skipped_unjudged": self.skipped_unjudged, "skipped_no_relevant": self.skipped_no_relevant,
                "per_query": {q: self.per_query[q] for q in natsorted(self.per_query)}}


def split_seconds(timing):
    """{llm, total} from a timing record such as {"oracle": 4.9, "other": 0.1}."""
    llm = timing.get("llm", timing.get("oracle", 0.0))
    if "total" in timing:
        total = timing["total"]
    else:
        total = sum(value for key, value in timing.items() if key != "llm")
    return {"llm": float(llm), "total": float(total)}


def aggregate(run, qrels, ks=(50, 100, 200), timings=None, ndcg_ks=(10,), gain="exponential"):
    """
    Evaluate every query of ``run``.

    Parameters
    ----------
    run : RunFile or dict
    qrels : Qrels
    ks : iterable of int
        Recall cut-offs
    timings : dict, optional
        query id -> timing record (see ``split_seconds``)
    ndcg_ks : iterable of int
        NDCG cut-offs. Default (10,)
    gain : str

    Returns
    -------
    report : MetricReport
    """
    if not run:
        raise ValueError("Cannot evaluate an empty run")
    names = [(metric_name("recall", k), "recall", k) for k in ks] + \
            [(metric_name("ndcg", k), "ndcg", k) for k in ndcg_ks]
    report = MetricReport()
    for query_id in natsorted(run):
        if query_id not in qrels:
            report.skipped_unjudged += 1
            continue
        if not qrels.relevant(query_id):
            report.skipped_no_relevant += 1
            continue
        ranking = run[query_id]
        report.per_query[query_id] = {
            name: recall_at_k(ranking, qrels, query_id, k) if metric == "recall"
            else ndcg_at_k(ranking, qrels, query_id, k, gain)
            for name, metric, k in names}
    if report.skipped_unjudged or report.skipped_no_relevant:
        logger.warning("Skipped %d run queries without qrels and %d without relevant documents",
                       report.skipped_unjudged, report.skipped_no_relevant)
    for name, _, _ in names:
        values = [scores[name] for scores in report.per_query.values()]
        report.means[name] = float(np.mean(values)) if values else float("nan")
    if timings:
        split = [split_seconds(timings[q]) for q in run if q in timings]
        if split:
            report.seconds = {key: float(np.mean([s[key] for s in split])) for key in ("llm", "total")}
    return report

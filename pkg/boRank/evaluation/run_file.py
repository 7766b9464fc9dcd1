"""TREC run files: ``query_id Q0 doc_id rank score run_tag``."""
import logging
from pathlib import Path

from natsort import natsorted

from boRank.utils.errors import RunFormatError

logger = logging.getLogger(__name__)


class RunFile(dict):
    """query id -> ranking, a list of (doc_id, score) with scores non-increasing."""

    def __init__(self, rankings=None, run_tag="boRank"):
        super().__init__(rankings or {})
        self.run_tag = run_tag

    def doc_ids(self, query_id):
        return [doc_id for doc_id, _ in self.get(query_id, [])]


def read_run(path):
    """
    Parse a TREC run file, internal or external (e.g. a BM25 run).

    Rows of each query are ordered by their rank column, which must run 1..n without gaps.

    Returns
    -------
    run : RunFile
        ``run_tag`` is the tag of the first row (the file stem for an empty file).
    """
    rows = {}
    run_tag = None
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise RunFormatError(path, line_number, f"expected 6 fields, got {len(parts)}")
            query_id, _, doc_id, raw_rank, raw_score, tag = parts
            try:
                rank, score = int(raw_rank), float(raw_score)
            except ValueError:
                raise RunFormatError(path, line_number, f"bad rank/score '{raw_rank} {raw_score}'") from None
            run_tag = run_tag or tag
            rows.setdefault(query_id, []).append((rank, doc_id, score, line_number))

    run = RunFile(run_tag=run_tag or Path(path).stem)
    for query_id, entries in rows.items():
        entries.sort()
        for expected, (rank, doc_id, _, line_number) in enumerate(entries, start=1):
            if rank != expected:
                raise RunFormatError(path, line_number, f"query {query_id}: rank {rank} where {expected} was expected")
        run[query_id] = [(doc_id, score) for _, doc_id, score, _ in entries]
    logger.info("Read run %s: %d queries", path, len(run))
    return run


def write_run(run, path, run_tag=None):
    """Write ``run`` in TREC format, queries in natural order, scores to 6 decimals."""
    run_tag = run_tag or getattr(run, "run_tag", "boRank")
    with open(path, "w", encoding="utf-8") as f:
        for query_id in natsorted(run):
            for rank, (doc_id, score) in enumerate(run[query_id], start=1):
                f.write(f"{query_id} Q0 {doc_id} {rank} {score:.6f} {run_tag}\n")

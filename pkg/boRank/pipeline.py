"""
Dataset loading, validation and the per-query worker pool behind the command line.
"""
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from natsort import natsorted
from tqdm import tqdm

from boRank.config import config_to_dict
from boRank.corpus.store import attach_query_embeddings, load_corpus, load_embeddings, load_qrels, load_queries
from boRank.evaluation.run_file import RunFile, write_run
from boRank.oracle.cache import ScoreCache
from boRank.oracle.llm_client import LLMClient
from boRank.oracle.oracles import OracleKind, make_oracle
from boRank.search.baselines import baseline_trace, bo_topk_ablation
from boRank.search.reformulation import (attach_reformulation_embeddings, generate_reformulations,
                                         load_reformulations)
from boRank.search.session import run_session
from boRank.utils.errors import BoRankError, ConfigError

logger = logging.getLogger(__name__)


@dataclass
class Dataset:
    corpus: object
    store: object
    queries: dict  # query id -> QueryRecord
    qrels: object = None
    reformulations: dict = field(default_factory=dict)


def load_dataset(paths, need_qrels=False):
    """Load every file named by ``paths`` (a ``DatasetPaths``) and attach the embeddings."""
    corpus = load_corpus(paths.corpus)
    store = load_embeddings(paths.embeddings, paths.manifest)
    texts = load_queries(paths.queries)
    queries = attach_query_embeddings(texts, load_embeddings(paths.query_embeddings, paths.query_manifest))
    qrels = None
    if paths.qrels:
        qrels = load_qrels(paths.qrels, paths.qrels_format)
    elif need_qrels:
        raise ConfigError("dataset.qrels is required by this oracle")
    refs = load_reformulations(paths.reformulations, texts)
    if refs:
        if not paths.reformulation_embeddings or not paths.reformulation_manifest:
            raise ConfigError("dataset.reformulation_embeddings/manifest are required with reformulations")
        refs = attach_reformulation_embeddings(
            refs, load_embeddings(paths.reformulation_embeddings, paths.reformulation_manifest), texts)
    return Dataset(corpus, store, queries, qrels, refs)


@dataclass
class Diagnostics:
    errors: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.errors


def validate_dataset(paths):
    """
    Cross-check corpus, embeddings, queries, qrels and reformulations.

    Every inconsistency is reported as ``"<path>: <problem>"``; nothing is raised for data
    problems once the files parse.
    """
    diagnostics = Diagnostics()
    errors = diagnostics.errors
    for name, path in paths.required():
        if not Path(path).exists():
            errors.append(f"{path}: {name} file does not exist")
    if errors:
        return diagnostics
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            corpus = load_corpus(paths.corpus)
            store = load_embeddings(paths.embeddings, paths.manifest)
            texts = load_queries(paths.queries)
            query_store = load_embeddings(paths.query_embeddings, paths.query_manifest)
            qrels = load_qrels(paths.qrels, paths.qrels_format) if paths.qrels else None
            refs = load_reformulations(paths.reformulations, texts)
            ref_store = None
            if refs and paths.reformulation_embeddings and paths.reformulation_manifest:
                ref_store = load_embeddings(paths.reformulation_embeddings, paths.reformulation_manifest)
    except BoRankError as e:
        errors.append(e.message)
        return diagnostics
    for warning in caught:
        logger.warning("%s", warning.message)

    if not texts:
        errors.append(f"{paths.queries}: no queries")
    corpus_ids = set(corpus.ids)
    errors += [f"{paths.manifest}: corpus id '{d}' has no embedding" for d in corpus.ids if d not in store]
    errors += [f"{paths.manifest}: embedding id '{d}' is not in the corpus" for d in store.ids if d not in corpus_ids]
    errors += [f"{paths.query_manifest}: query '{q}' has no embedding" for q in texts if q not in query_store]
    if query_store.dim != store.dim:
        errors.append(f"{paths.query_embeddings}: dimension {query_store.dim}, corpus embeddings have {store.dim}")
    if qrels is not None:
        errors += [f"{paths.qrels}: ({q}, {d}) refers to an unknown "
                   f"{'query' if q not in texts else 'document'}"
                   for q, d in qrels.unresolved(texts, corpus_ids)]
    if refs:
        if ref_store is None:
            errors.append(f"{paths.reformulations}: reformulations given without reformulation embeddings")
        else:
            for query_id, ref_set in refs.items():
                if query_id not in texts:
                    errors.append(f"{paths.reformulations}: unknown query '{query_id}'")
                errors += [f"{paths.reformulation_manifest}: missing embedding '{r}'" for r in ref_set.ids
                           if r not in ref_store]

    relevant = [len(qrels.relevant(q)) for q in texts if qrels is not None and qrels.relevant(q)]
    diagnostics.stats = {"documents": len(corpus), "queries": len(texts), "dimension": store.dim,
                         "normalized": store.normalized, "judged_queries": len(relevant),
                         "mean_relevant_per_query": float(np.mean(relevant)) if relevant else 0.0,
                         "reformulated_queries": len(refs)}
    return diagnostics


def build_oracle(config, dataset):
    if not config.method.needs_oracle:
        return None
    cache = ScoreCache(config.oracle.cache_path)
    return make_oracle(config.oracle, qrels=dataset.qrels, store=dataset.store, cache=cache)


def run_query(config, dataset, oracle, query_id):
    """Run the configured method for one query and return its ``SessionTrace``."""
    q = dataset.queries[query_id]
    refs = dataset.reformulations.get(query_id)
    method = config.method
    if method.name == "bo":
        return run_session(q, refs, dataset.store, oracle, method.session, dataset.corpus)
    if method.name == "bo_topk":
        return bo_topk_ablation(q, refs, dataset.store, oracle, method.session, dataset.corpus)
    return baseline_trace(q, refs, dataset.store, oracle, method.baseline, method.output_k, dataset.corpus)


@dataclass
class RunSummary:
    run: RunFile
    traces: dict
    failures: dict  # query id -> reason
    paths: dict


def run_experiment(config, dataset=None, plot_traces=False, progress=True):
    """
    Run the configured method over every query and write the outputs.

    Writes ``<run_tag>.run`` (TREC), ``<run_tag>.traces/<query>.jsonl``,
    ``<run_tag>.timings.json`` and ``<run_tag>.config.json`` under ``config.output_dir``.
    Failed queries are logged and listed in the timings file; the others still run.
    """
    dataset = dataset or load_dataset(config.dataset,
                                      need_qrels=config.method.needs_oracle
                                      and config.oracle.kind is OracleKind.SIMULATED_QRELS)
    oracle = build_oracle(config, dataset)
    output_dir = Path(config.output_dir)
    trace_dir = output_dir / f"{config.run_tag}.traces"
    trace_dir.mkdir(parents=True, exist_ok=True)

    traces, failures = {}, {}
    query_ids = natsorted(dataset.queries)
    with ThreadPoolExecutor(max_workers=config.worker_count) as pool:
        futures = {pool.submit(run_query, config, dataset, oracle, query_id): query_id for query_id in query_ids}
        for future in tqdm(as_completed(futures), total=len(futures), desc=config.run_tag, disable=not progress):
            query_id = futures[future]
            try:
                traces[query_id] = future.result()
            except BoRankError as e:
                logger.error("Query %s failed: %s", query_id, e.message)
                failures[query_id] = e.message
                continue
            if traces[query_id].status == "failed":
                failures[query_id] = traces[query_id].error

    run = RunFile({q: traces[q].ranking for q in natsorted(traces)}, run_tag=config.run_tag)
    paths = {"run": output_dir / f"{config.run_tag}.run", "timings": output_dir / f"{config.run_tag}.timings.json",
             "config": output_dir / f"{config.run_tag}.config.json", "traces": trace_dir}
    write_run(run, paths["run"])
    for query_id in natsorted(traces):
        traces[query_id].write(trace_dir / f"{query_id}.jsonl")
    with open(paths["timings"], "w", encoding="utf-8") as f:
        json.dump({"queries": {q: traces[q].timings() for q in natsorted(traces)},
                   "failed": {q: failures[q] for q in natsorted(failures)},
                   "oracle_calls": getattr(oracle, "calls", 0),
                   "clamped_grades": getattr(oracle, "clamped", 0)}, f, indent=2)
    with open(paths["config"], "w", encoding="utf-8") as f:
        json.dump(config_to_dict(config), f, indent=2)

    if plot_traces:
        from boRank.utils.plotting import plot_session_trace
        for query_id in natsorted(traces):
            plot_session_trace(traces[query_id], s_max=config.oracle.s_max, path=trace_dir / f"{query_id}.png")
    logger.info("Wrote %s (%d queries, %d failed)", paths["run"], len(run), len(failures))
    return RunSummary(run, traces, failures, paths)


def reformulate_queries(config, count, dataset_texts):
    """
    Generate ``count`` LLM reformulations for every query, concurrently.

    Returns
    -------
    sets : dict of str -> ReformulationSet
        Queries whose generation failed are left out and logged.
    """
    if config.oracle.kind is not OracleKind.LLM_HTTP:
        raise ConfigError("Reformulation needs an llm-http oracle endpoint")
    client = LLMClient.from_config(config.oracle)
    sets = {}
    with ThreadPoolExecutor(max_workers=config.worker_count) as pool:
        futures = {pool.submit(generate_reformulations, client, text, count, query_id): query_id
                   for query_id, text in dataset_texts.items()}
        for future in tqdm(as_completed(futures), total=len(futures), desc="reformulate"):
            query_id = futures[future]
            try:
                sets[query_id] = future.result()
            except BoRankError as e:
                logger.error("Reformulating query %s failed: %s", query_id, e.message)
    return sets

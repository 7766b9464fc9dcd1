"""
``borank`` command line: validate, run, eval, sweep, reformulate and synth.

Every subcommand exits 0 on success and 1 on any error (2 for usage errors).
"""
import argparse
import itertools
import json
import logging
import re
import sys
from pathlib import Path

from natsort import natsorted

from boRank.config import ExperimentConfig, apply_overrides, config_from_dict, load_config
from boRank.corpus.store import load_qrels, load_queries
from boRank.corpus.synthetic import make_two_cluster, write_dataset
from boRank.evaluation.metrics import aggregate
from boRank.evaluation.report import report_columns, write_report
from boRank.evaluation.run_file import read_run
from boRank.pipeline import reformulate_queries, run_experiment, validate_dataset
from boRank.search.reformulation import write_reformulations
from boRank.utils.errors import BoRankError, ConfigError

logger = logging.getLogger("boRank")


def _overrides(args):
    overrides = list(args.set or [])
    for name in ("output_dir", "run_tag", "seed", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            overrides.append(f"{name}={json.dumps(value)}")
    return overrides


def cmd_validate(args):
    config = load_config(args.config, _overrides(args))
    diagnostics = validate_dataset(config.dataset)
    for key, value in diagnostics.stats.items():
        print(f"{key:>24}: {value:.1f}" if isinstance(value, float) else f"{key:>24}: {value}")
    for error in diagnostics.errors:
        print(f"ERROR {error}", file=sys.stderr)
    return 0 if diagnostics.ok else 1


def cmd_run(args):
    config = load_config(args.config, _overrides(args))
    summary = run_experiment(config, plot_traces=args.plot_traces, progress=not args.quiet)
    print(f"Run file: {summary.paths['run']}")
    if summary.failures:
        print(f"{len(summary.failures)} queries failed: {', '.join(natsorted(summary.failures))}", file=sys.stderr)
        return 1
    return 0


def _timings_for(run_path):
    path = Path(run_path).with_suffix(".timings.json")
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as f:
        return json.load(f).get("queries")


def eval_settings(args):
    """
    Cut-offs, gain and qrels for ``eval``: flags first, then the ``--config`` file, then defaults.

    N@10 is always part of ``ndcg_ks``.
    """
    config = load_config(args.config) if args.config else None
    defaults = config or ExperimentConfig(dataset=None)
    qrels = args.qrels or (config.dataset.qrels if config else None)
    if not qrels:
        raise BoRankError("No qrels: pass --qrels or a --config whose dataset has qrels")
    return {"ks": list(args.ks or defaults.ks),
            "ndcg_ks": sorted(set(args.ndcg_ks or defaults.ndcg_ks) | {10}),
            "gain": args.gain or defaults.gain,
            "qrels": qrels,
            "qrels_format": args.qrels_format or (config.dataset.qrels_format if config else "beir-tsv"),
            "dataset": args.dataset or (config.dataset.name if config else Path(qrels).resolve().parent.name)}


def cmd_eval(args):
    settings = eval_settings(args)
    if not Path(settings["qrels"]).exists():
        raise BoRankError(f"Qrels file {settings['qrels']} does not exist")
    qrels = load_qrels(settings["qrels"], settings["qrels_format"])
    dataset = settings["dataset"]
    reports = {}
    for run_path in args.runs:
        if not Path(run_path).exists():
            raise BoRankError(f"Run file {run_path} does not exist")
        method = Path(run_path).stem
        reports[method] = {dataset: aggregate(read_run(run_path), qrels, settings["ks"], _timings_for(run_path),
                                              ndcg_ks=settings["ndcg_ks"], gain=settings["gain"])}
    columns = report_columns(settings["ks"], settings["ndcg_ks"])
    print(write_report(reports, columns, args.output, args.json))
    if args.plot:
        from boRank.utils.plotting import plot_metric_report
        plot_metric_report(reports, columns, dataset, path=args.plot)
    return 0


def sweep_overrides(grid):
    """
    Cartesian product of grid entries, as override lists.

    An entry is ``key=v1,v2,...``, or ``key=[v1, v2, ...]`` (a JSON list) when the values
    themselves contain commas, e.g. ``oracle.response_path=[["choices", 0], ["output"]]``.

    Examples
    --------
    >>> sweep_overrides(["method.session.batch_size=1,10"])
    [['method.session.batch_size=1'], ['method.session.batch_size=10']]
    """
    axes = []
    for entry in grid:
        if "=" not in entry:
            raise ConfigError(f"Grid entry '{entry}' is not of the form key=v1,v2,...")
        key, raw = entry.split("=", 1)
        if raw.lstrip().startswith("["):
            try:
                values = json.loads(raw)
            except ValueError as e:
                raise ConfigError(f"Grid entry '{entry}': invalid JSON list ({e})") from None
            values = [json.dumps(value) for value in values]
        else:
            values = raw.split(",")
        axes.append([f"{key.strip()}={value}" for value in values])
    return [list(combination) for combination in itertools.product(*axes)]


def sweep_tag(run_tag, combination):
    """Run tag of one grid point; characters of the values outside [A-Za-z0-9_.-] are dropped."""
    parts = []
    for item in combination:
        key, value = item.split("=", 1)
        clean = re.sub(r"[^\w.-]+", "", value)
        parts.append(f"{key.rsplit('.', 1)[-1]}-{clean}")
    return "_".join([run_tag] + parts)


def cmd_sweep(args):
    with open(args.config, encoding="utf-8") as f:
        base = json.load(f)
    apply_overrides(base, _overrides(args))
    failed = 0
    for combination in sweep_overrides(args.grid):
        data = apply_overrides(json.loads(json.dumps(base)), combination)
        data["run_tag"] = sweep_tag(data.get("run_tag", "boRank"), combination)
        config = config_from_dict(data)
        print(f"== {config.run_tag}")
        summary = run_experiment(config, progress=not args.quiet)
        failed += len(summary.failures)
    return 1 if failed else 0


def cmd_reformulate(args):
    config = load_config(args.config, _overrides(args))
    texts = load_queries(config.dataset.queries)
    sets = reformulate_queries(config, args.count, texts)
    output = args.output or config.dataset.reformulations
    if not output:
        raise BoRankError("No output path: pass --output or set dataset.reformulations")
    write_reformulations(sets, output)
    print(f"Wrote {len(sets)} reformulation sets to {output}")
    return 0 if len(sets) == len(texts) else 1


def cmd_synth(args):
    dataset = make_two_cluster(seed=args.seed, dim=args.dim, cluster_size=args.cluster_size,
                               background=args.background, clumps=args.clumps)
    paths = write_dataset(dataset, args.directory)
    print(f"Synthetic dataset ({len(dataset.corpus)} documents) written to {args.directory}")
    print(f"Example config: {paths['config']}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="borank", description="Bayesian-optimisation document retrieval")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("config", help="experiment JSON file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value (repeatable)")
        p.add_argument("--output-dir")
        p.add_argument("--run-tag")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.set_defaults(func=func)
        return p

    experiment("validate", cmd_validate, "check dataset files and print statistics")
    p = experiment("run", cmd_run, "run the configured method over all queries")
    p.add_argument("--plot-traces", action="store_true", help="save a plot of every session trace")
    p.add_argument("-q", "--quiet", action="store_true", help="no progress bar")
    p = experiment("sweep", cmd_sweep, "run the cartesian product of parameter values")
    p.add_argument("--grid", action="append", required=True, metavar="KEY=V1,V2",
                   help="swept values, comma separated or a JSON list (repeatable)")
    p.add_argument("-q", "--quiet", action="store_true")
    p = experiment("reformulate", cmd_reformulate, "generate query reformulations with the LLM endpoint")
    p.add_argument("--count", type=int, default=4, help="reformulations per query (default 4)")
    p.add_argument("--output", help="JSONL output (default dataset.reformulations)")

    p = sub.add_parser("eval", help="evaluate run files against qrels")
    p.add_argument("runs", nargs="+", help="TREC run files")
    p.add_argument("--config", help="experiment JSON supplying qrels, ks, ndcg_ks and gain defaults")
    p.add_argument("--qrels", help="qrels file (default: the config's dataset.qrels)")
    p.add_argument("--qrels-format", choices=("beir-tsv", "trec"))
    p.add_argument("--ks", type=int, nargs="+", help="recall cut-offs (default 50 100 200)")
    p.add_argument("--ndcg-ks", type=int, nargs="+", help="NDCG cut-offs, 10 is always added")
    p.add_argument("--gain", choices=("exponential", "linear"), help="NDCG gain (default exponential)")
    p.add_argument("--dataset", help="dataset label (default: config dataset name, else qrels directory name)")
    p.add_argument("--output", help="also write the table here")
    p.add_argument("--json", help="write the machine-readable report here")
    p.add_argument("--plot", help="save a bar chart here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write the synthetic two-cluster benchmark")
    p.add_argument("directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--cluster-size", type=int, default=20)
    p.add_argument("--background", type=int, default=1960)
    p.add_argument("--clumps", type=int, default=3)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except BoRankError as e:
        logger.error("%s", e.message)
        return 1
    except OSError as e:
        logger.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())

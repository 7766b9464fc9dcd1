"""
Multi-method comparison tables.

``reports`` is always nested as method -> dataset -> MetricReport. The best value of each
column is marked with ``*``.
"""
import json
import math

from natsort import natsorted

from boRank.evaluation.metrics import metric_name


def report_columns(ks=(50, 100, 200), ndcg_ks=(10,)):
    """Recall columns for ``ks`` followed by the NDCG columns (N@10 is always present)."""
    ndcg_ks = sorted(set(ndcg_ks) | {10})
    return [metric_name("recall", k) for k in ks] + [metric_name("ndcg", k) for k in ndcg_ks]


def _datasets(reports):
    return natsorted({dataset for per_dataset in reports.values() for dataset in per_dataset})


def _best(reports, dataset, column):
    values = [r[dataset].means.get(column) for r in reports.values() if dataset in r]
    values = [v for v in values if v is not None and not math.isnan(v)]
    return max(values) if values else None


def format_table(reports, columns):
    """
    Aligned text table, one row per method and one column group per dataset.

    Metrics are shown x100 with one decimal; mean LLM/total seconds follow when known.
    """
    datasets = _datasets(reports)
    timed = any(r.seconds for per_dataset in reports.values() for r in per_dataset.values())
    header = ["Method"]
    for dataset in datasets:
        header += [f"{dataset} {column}" for column in columns]
        if timed:
            header += [f"{dataset} LLM s", f"{dataset} Total s"]

    rows = []
    for method in reports:
        row = [method]
        for dataset in datasets:
            report = reports[method].get(dataset)
            for column in columns:
                value = report.means.get(column) if report is not None else None
                if value is None or math.isnan(value):
                    row.append("-")
                    continue
                cell = f"{100 * value:.1f}"
                if len(reports) > 1 and value == _best(reports, dataset, column):
                    cell += "*"
                row.append(cell)
            if timed:
                seconds = report.seconds if report is not None else {}
                row += [f"{seconds[key]:.1f}" if key in seconds else "-" for key in ("llm", "total")]
        rows.append(row)

    widths = [max(len(line[i]) for line in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(line, widths)))
             for line in [header] + rows]
    return "\n".join(lines)


def report_json(reports):
    """Machine-readable {method: {dataset: {metric: value, ...}}}."""
    return {method: {dataset: {**report.means, **{f"seconds_{key}": value for key, value in report.seconds.items()},
                               "skipped_unjudged": report.skipped_unjudged,
                               "skipped_no_relevant": report.skipped_no_relevant}
                     for dataset, report in per_dataset.items()}
            for method, per_dataset in reports.items()}


def write_report(reports, columns, text_path=None, json_path=None):
    table = format_table(reports, columns)
    if text_path is not None:
        with open(text_path, "w", encoding="utf-8") as f:
            f.write(table + "\n")
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump(report_json(reports), f, indent=2, sort_keys=True)
    return table

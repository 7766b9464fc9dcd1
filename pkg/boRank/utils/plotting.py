import matplotlib.pyplot as plt
import numpy as np
from matplotlib import colors

# Grade 0 (dark) to s_max (bright)
_grade_dict = {'red': ((0.0, 0.1, 0.1),
                       (0.5, 0.9, 0.9),
                       (1.0, 1.0, 1.0)),
               'green': ((0.0, 0.1, 0.1),
                         (1.0, 0.8, 0.8)),
               'blue': ((0.0, 0.3, 0.3),
                        (0.5, 0.1, 0.1),
                        (1.0, 0.0, 0.0))}
grademap = colors.LinearSegmentedColormap('Grades', _grade_dict)


def plot_session_trace(trace, s_max=3, title=None, path=None):
    """Grades of every observed document per batch, and the cumulative number of relevant observations."""
    fig, (grades_ax, cumulative_ax) = plt.subplots(nrows=2, ncols=1, sharex=True)
    if trace.batches:
        width = max(len(batch.grades) for batch in trace.batches)
        grid = np.full((width, len(trace.batches)), np.nan)
        for column, batch in enumerate(trace.batches):
            grid[:len(batch.grades), column] = batch.grades
        image = grades_ax.imshow(grid, cmap=grademap, vmin=0, vmax=s_max, aspect='auto',
                                 extent=(0.5, len(trace.batches) + 0.5, width + 0.5, 0.5))
        fig.colorbar(image, ax=grades_ax, label="Grade")
        relevant = np.cumsum([sum(1 for g in batch.grades if g > 0) for batch in trace.batches])
        cumulative_ax.plot(np.arange(1, len(trace.batches) + 1), relevant, 'green', marker='o')
    grades_ax.set_ylabel("Position in batch")
    cumulative_ax.set_xlabel("Batch")
    cumulative_ax.set_ylabel("Relevant observed")
    fig.suptitle(title if title is not None else f"Query {trace.query_id}")

    if path is not None:
        fig.savefig(path)
        plt.close(fig)
    return fig


def plot_metric_report(reports, columns, dataset=None, path=None):
    """Grouped bars, one group per metric column and one bar per method (values x100)."""
    methods = list(reports)
    if dataset is None:
        dataset = next(iter(next(iter(reports.values()))), None)
    fig, ax = plt.subplots()
    width = 0.8 / max(len(methods), 1)
    x = np.arange(len(columns))
    for i, method in enumerate(methods):
        report = reports[method].get(dataset)
        heights = [100 * report.means.get(column, np.nan) if report is not None else np.nan for column in columns]
        ax.bar(x + i * width, heights, width, label=method)
    ax.set_xticks(x + width * (len(methods) - 1) / 2)
    ax.set_xticklabels(columns)
    ax.set_ylabel("Score (x100)")
    ax.set_title(dataset)
    ax.legend()

    if path is not None:
        fig.savefig(path)
        plt.close(fig)
    return fig

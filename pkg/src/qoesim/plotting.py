"""Figures for batch and compare output.  Everything is written to PNG files;
nothing is shown on screen."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

LABELS = {
    "mos": "mean MOS",
    "sessions": "decoded sessions",
    "loss_ratio": "mean video loss ratio",
    "delay_ms": "mean video delay (ms)",
    "transmitted_packets": "mean video packets sent",
    "utilization": "link utilization",
}


def _steps(cdf):
    xs, ys = [], []
    prev = 0.0
    for v, f in cdf:
        xs += [v, v]
        ys += [prev, f]
        prev = f
    return xs, ys


def plot_cdfs(cdfs, metric, path):
    """One step curve per architecture.  ``cdfs`` maps label -> [(value, fraction)]."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for label, cdf in sorted(cdfs.items()):
        xs, ys = _steps(cdf)
        ax.plot(xs, ys, label=label, drawstyle="default")
    ax.set_xlabel(LABELS.get(metric, metric))
    ax.set_ylabel("fraction of runs")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_trend(table, metrics, path):
    """Bar chart of per-architecture means.  ``table`` maps label -> {metric: mean}."""
    labels = sorted(table)
    fig, axes = plt.subplots(1, len(metrics), figsize=(3.2 * len(metrics), 3.4), squeeze=False)
    for ax, m in zip(axes[0], metrics):
        vals = [table[a].get(m, float("nan")) for a in labels]
        ax.bar(range(len(labels)), vals, color="0.55")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.set_title(LABELS.get(m, m), fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)

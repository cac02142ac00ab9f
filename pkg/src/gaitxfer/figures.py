"""Report figures rendered straight to files (headless backend).

Three plots cover the pipeline's outputs: per-sensor F1 error bars, the
autoencoder training curve, and a grouped metric comparison across
feature variants. Each function writes the file and returns its path.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import METRIC_NAMES


def plot_sensor_sweep(rows, path, title="Per-sensor classification"):
    """Error-bar plot of F1 mean and spread, one point per sweep row."""
    if not rows:
        raise ValueError("no sweep rows to plot")
    names = [row["sensor"] for row in rows]
    means = [row["f1_mean"] for row in rows]
    stds = [row["f1_std"] for row in rows]
    fig, ax = plt.subplots(figsize=(1.2 * len(rows) + 2, 4))
    ax.errorbar(range(len(rows)), means, yerr=stds, fmt="o", capsize=4)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("F1 score")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_loss_curve(loss_history, path, title="Reconstruction loss"):
    """Epoch-indexed training-loss line."""
    if len(loss_history) == 0:
        raise ValueError("no loss history to plot")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(loss_history) + 1), loss_history)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean squared error")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_metrics_comparison(reports, path, title="Feature variants"):
    """Grouped bars with split-spread whiskers, one group per report.

    `reports` maps a display name to a MetricsReport; bar heights are the
    aggregate means of the four headline metrics.
    """
    if not reports:
        raise ValueError("no reports to plot")
    names = list(reports)
    width = 0.8 / len(METRIC_NAMES)
    base = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(1.8 * len(names) + 2, 4))
    for i, metric in enumerate(METRIC_NAMES):
        means = [reports[name].aggregate[metric]["mean"] for name in names]
        stds = [reports[name].aggregate[metric]["std"] for name in names]
        ax.bar(base + i * width, means, width=width, yerr=stds, capsize=3,
               label=metric.capitalize())
    ax.set_xticks(base + 0.4 - width / 2)
    ax.set_xticklabels(names, rotation=15, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize="small")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path

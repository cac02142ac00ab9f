"""Smoke tests: each figure function writes a non-empty image file."""

import numpy as np
import pytest

from gaitxfer.figures import plot_loss_curve, plot_metrics_comparison, plot_sensor_sweep
from gaitxfer.harness import MetricsReport, aggregate_splits


def make_report(values):
    per_split = [
        {"accuracy": v, "precision": v, "recall": v, "f1": v, "confusion": [[1, 0], [0, 1]]}
        for v in values
    ]
    return MetricsReport(
        config={}, n_splits=len(values), per_split=per_split,
        aggregate=aggregate_splits(per_split),
    )


def test_sensor_sweep_plot(tmp_path):
    rows = [
        {"sensor": "sternum", "f1_mean": 0.8, "f1_std": 0.05},
        {"sensor": "lumbar", "f1_mean": 0.6, "f1_std": 0.10},
        {"sensor": "all", "f1_mean": 0.9, "f1_std": 0.02},
    ]
    out = plot_sensor_sweep(rows, tmp_path / "sweep.png")
    assert out.exists() and out.stat().st_size > 0

    with pytest.raises(ValueError, match="no sweep rows"):
        plot_sensor_sweep([], tmp_path / "empty.png")


def test_loss_curve_plot(tmp_path):
    history = np.exp(-np.linspace(0, 3, 40))
    out = plot_loss_curve(history, tmp_path / "loss.png")
    assert out.exists() and out.stat().st_size > 0

    with pytest.raises(ValueError, match="no loss history"):
        plot_loss_curve([], tmp_path / "empty.png")


def test_metrics_comparison_plot(tmp_path):
    reports = {
        "gap": make_report([0.9, 0.85, 0.95]),
        "pca": make_report([0.8, 0.8, 0.8]),
        "raw": make_report([0.5, 0.6, 0.4]),
    }
    out = plot_metrics_comparison(reports, tmp_path / "compare.png")
    assert out.exists() and out.stat().st_size > 0

    with pytest.raises(ValueError, match="no reports"):
        plot_metrics_comparison({}, tmp_path / "empty.png")

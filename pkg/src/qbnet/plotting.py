"""PNG figures for CLI reports (headless matplotlib)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _finish(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def harness_figure(report, directory) -> Path:
    """Per-trial metric with the pass threshold; failing trials in red."""
    metrics = np.asarray(report.metrics, dtype=float)
    failed = {f["trial"] for f in report.failures}
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    trials = np.arange(len(metrics))
    floor = 1e-18
    shown = np.maximum(np.abs(metrics), floor)
    colors = ["tab:red" if t in failed else "tab:blue" for t in trials]
    ax.scatter(trials, shown, s=12, c=colors)
    if report.tolerance is not None and not report.informational:
        ax.axhline(report.tolerance, color="k", ls="--", lw=1, label=f"threshold {report.tolerance:g}")
        ax.legend(loc="upper right", fontsize=8)
    if np.any(shown > floor):
        ax.set_yscale("log")
    ax.set_xlabel("trial")
    ax.set_ylabel(report.metric)
    verdict = "informational" if report.informational else ("pass" if report.passed else f"{len(report.failures)} failing")
    ax.set_title(f"{report.check} (seed {report.seed}, {report.trials} trials): {verdict}", fontsize=9)
    return _finish(fig, Path(directory) / f"harness-{report.check}.png")


def spectrum_figure(eigenvalues, title: str, path) -> Path:
    """Bar chart of a density-matrix spectrum."""
    vals = np.asarray(eigenvalues, dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.bar(np.arange(len(vals)), vals, color="tab:purple")
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue")
    ax.set_title(title, fontsize=9)
    return _finish(fig, Path(path))


def distribution_figure(labels, probs, title: str, path) -> Path:
    """Bar chart of a measurement distribution."""
    fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * len(labels) + 1.5), 3.2))
    ax.bar(range(len(probs)), probs, color="tab:green")
    ax.set_xticks(range(len(probs)), labels, rotation=60, fontsize=7)
    ax.set_ylabel("probability")
    ax.set_title(title, fontsize=9)
    return _finish(fig, Path(path))

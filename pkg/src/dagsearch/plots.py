"""Figure rendering for run logs and reports.

Each function draws one PNG next to the delimited artifact it illustrates and
returns the path. Rendering is headless (Agg) so the CLI works on machines
without a display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import BenchmarkReport, BootstrapReport
from .ppo import RunLogRow


def plot_run_log(rows: list[RunLogRow], path) -> Path:
    """Reward/baseline trajectory with the advantage magnitude underneath."""
    path = Path(path)
    iters = [r.iteration for r in rows]
    fig, (ax_top, ax_bot) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax_top.plot(iters, [r.mean_reward for r in rows], label="mean reward", lw=1.2)
    ax_top.plot(iters, [r.baseline for r in rows], label="baseline", lw=1.2, ls="--")
    ax_top.set_ylabel("penalized score")
    ax_top.legend(loc="lower right")
    ax_top.grid(alpha=0.3)
    ax_bot.plot(iters, [r.mean_abs_adv for r in rows], color="tab:red", lw=1.0)
    ax_bot.set_ylabel("mean |advantage|")
    ax_bot.set_xlabel("iteration")
    ax_bot.set_yscale("log")
    ax_bot.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_bootstrap_report(report: BootstrapReport, path) -> Path:
    """Distribution of per-cell bootstrap variances on a log axis."""
    path = Path(path)
    bvs = np.array(list(report.cell_bv.values()))
    positive = bvs[bvs > 0]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if positive.size:
        bins = np.logspace(np.log10(positive.min()), np.log10(positive.max()) + 1e-9, 30)
        ax.hist(positive, bins=bins, color="tab:blue", alpha=0.75)
        ax.set_xscale("log")
    n_zero = int((bvs == 0).sum())
    title = f"{report.estimator_label}: bootstrap variance over {bvs.size} cells"
    if n_zero:
        title += f" ({n_zero} exactly zero)"
    ax.axvline(report.mean_bv, color="tab:red", ls="--", label=f"mean {report.mean_bv:.3g}")
    ax.axvline(
        report.median_bv, color="tab:orange", ls=":", label=f"median {report.median_bv:.3g}"
    )
    ax.set_xlabel("bootstrap variance of held-out NLL")
    ax.set_ylabel("cells")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_benchmark_report(report: BenchmarkReport, path) -> Path:
    """Per-task SHD values with the mean and its bootstrap interval."""
    path = Path(path)
    idx = [i for i, _ in report.per_task]
    shd = [v for _, v in report.per_task]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar(range(len(shd)), shd, color="tab:blue", alpha=0.8)
    ax.axhline(report.mean_shd, color="tab:red", ls="--", label=f"mean {report.mean_shd:.2f}")
    ax.axhspan(
        report.ci_low,
        report.ci_high,
        color="tab:red",
        alpha=0.15,
        label=f"95% CI ({report.ci_low:.2f}, {report.ci_high:.2f})",
    )
    ax.set_xticks(range(len(shd)), [str(i) for i in idx])
    ax.set_xlabel("task")
    ax.set_ylabel("SHD between CPDAGs")
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path

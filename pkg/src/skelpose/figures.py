"""Matplotlib figure rendering for the CLI report paths.

Every figure goes to a file next to its delimited output; PNG metadata is
pinned so repeated runs produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

PNG_METADATA = {"Software": "skelpose"}


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=PNG_METADATA)
    plt.close(fig)


def save_loss_curve(losses, lrs, path, title="training loss"):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(range(1, len(losses) + 1), losses, lw=0.8, color="tab:blue")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss", color="tab:blue")
    ax.set_yscale("log")
    ax.set_title(title)
    ax2 = ax.twinx()
    ax2.plot(range(1, len(lrs) + 1), lrs, lw=0.8, color="tab:orange", alpha=0.7)
    ax2.set_ylabel("learning rate", color="tab:orange")
    ax2.set_yscale("log")
    fig.tight_layout()
    _save(fig, path)


def save_eval_figure(mpjpe_report, pckh_report, path):
    """Group bars for both metrics side by side."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    names = list(mpjpe_report.groups)
    ax1.bar(names, [mpjpe_report.groups[n] for n in names], color="tab:blue")
    ax1.axhline(mpjpe_report.mean, color="k", lw=1, ls="--",
                label=f"mean {mpjpe_report.mean:.1f} mm")
    ax1.set_ylabel("MPJPE (mm)")
    ax1.legend(frameon=False)
    ax1.tick_params(axis="x", rotation=45)
    names = list(pckh_report.groups)
    ax2.bar(names, [pckh_report.groups[n] for n in names], color="tab:green")
    ax2.axhline(pckh_report.mean, color="k", lw=1, ls="--",
                label=f"mean {pckh_report.mean:.1f} %")
    ax2.set_ylabel("PCKh (%)")
    ax2.set_ylim(0, 105)
    ax2.legend(frameon=False)
    ax2.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    _save(fig, path)


def save_selection_figure(reproj_errors, mpjpes, path):
    """Scatter of reprojection error vs 3D error for the selected hypotheses."""
    fig, ax = plt.subplots(figsize=(5, 4))
    if any(m is not None for m in mpjpes):
        xs = [e for e, m in zip(reproj_errors, mpjpes) if m is not None]
        ys = [m for m in mpjpes if m is not None]
        ax.scatter(xs, ys, s=12, alpha=0.7)
        ax.set_ylabel("MPJPE of selection (mm)")
    else:
        ax.hist(reproj_errors, bins=20)
        ax.set_ylabel("count")
    ax.set_xlabel("reprojection error (px^2)")
    fig.tight_layout()
    _save(fig, path)

"""Chart rendering for evaluation reports."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_LABELS = {
    "exact_match_pct": "exact match",
    "token_f1_pct": "token F1",
    "cmd_acc_pct": "cmd acc",
    "module_match_pct": "module match",
    "schema_correct_pct": "schema correct",
    "ansible_aware_pct": "aware recall",
}


def render_summary(report, path):
    """Bar chart of every percentage the report carries."""
    labels = []
    values = []
    for key, label in _LABELS.items():
        value = getattr(report, key, None)
        if value is None:
            continue
        labels.append(label)
        values.append(value)
    fig, ax = plt.subplots(figsize=(1.6 + 1.1 * len(labels), 4.0))
    bars = ax.bar(labels, values, color="#4878a8")
    ax.set_ylim(0, 105)
    ax.set_ylabel("percent")
    ax.set_title("%s evaluation (n=%d)" % (report.profile, report.count))
    ax.bar_label(bars, fmt="%.1f")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_f1_hist(scores, path, title="token F1 distribution"):
    """Histogram of per-item token F1 scores (0..1)."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.hist(scores, bins=10, range=(0.0, 1.0), color="#4878a8", edgecolor="white")
    ax.set_xlabel("token F1")
    ax.set_ylabel("items")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_eval_figures(report, f1_scores, out_dir):
    """Render the report charts into out_dir, returning the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = [render_summary(report, os.path.join(out_dir, "metrics_summary.png"))]
    if f1_scores:
        paths.append(
            render_f1_hist(f1_scores, os.path.join(out_dir, "token_f1_hist.png"))
        )
    return paths

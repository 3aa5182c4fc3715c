"""PNG figures written next to the TSV reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_stage_costs(rows: Sequence, path: str | Path, title: str = "Mean seconds per sentence") -> Path:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    stages = [r.stage for r in rows]
    ax.bar(stages, [r.mean_s for r in rows], color="#4c72b0")
    for i, r in enumerate(rows):
        ax.annotate(f"{r.percent:.0f}%", (i, r.mean_s), ha="center", va="bottom", fontsize=8)
    ax.set_ylabel("seconds")
    ax.set_title(title)
    ax.tick_params(axis="x", rotation=30)
    return _save(fig, path)


def plot_progress(records: Sequence, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for side, color in (("source", "#4c72b0"), ("target", "#dd8452")):
        vals = [r.average_progress for r in records if r.side == side]
        if vals:
            ax.hist(vals, bins=min(20, max(1, len(vals))), alpha=0.6, label=side, color=color)
    ax.axvline(0.0, color="grey", lw=0.8)
    ax.set_xlabel("average progress per step")
    ax.set_ylabel("bridges")
    if records:
        ax.legend()
    return _save(fig, path)


def plot_scores(table, path: str | Path) -> Path:
    rows = table.rows()
    scorers = table.scorers
    fig, ax = plt.subplots(figsize=(max(5, 1.2 * len(rows) * max(1, len(scorers))), 3.5))
    width = 0.8 / max(1, len(scorers))
    for j, s in enumerate(scorers):
        xs = [i + j * width for i in range(len(rows))]
        ax.bar(xs, [scores.get(s) or 0.0 for _, _, scores in rows], width, label=s)
    ax.set_xticks([i + width * (len(scorers) - 1) / 2 for i in range(len(rows))])
    ax.set_xticklabels([f"{m}\n{lang}" for m, lang, _ in rows], fontsize=8)
    ax.set_ylabel("score x100")
    if scorers:
        ax.legend(fontsize=8)
    return _save(fig, path)

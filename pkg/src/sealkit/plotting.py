"""Report figures written next to the JSON/Markdown outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

METRICS = ("format_acc", "tool_p", "tool_r", "tool_f1", "param_p", "param_r", "param_f1")
_LABELS = ("Format ACC", "Tool P", "Tool R", "Tool F1", "Param P", "Param R", "Param F1")


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # Fixed metadata keeps repeated renders byte-stable.
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_metric_bars(splits: Mapping[str, Mapping[str, float]], path: str | Path) -> Path:
    """Grouped bars, one group per metric, one bar per split."""
    names = list(splits)
    fig, ax = plt.subplots(figsize=(9, 4))
    width = 0.8 / max(len(names), 1)
    for j, name in enumerate(names):
        xs = [i + j * width for i in range(len(METRICS))]
        ax.bar(xs, [100 * splits[name].get(m, 0.0) for m in METRICS], width, label=name)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(METRICS))])
    ax.set_xticklabels(_LABELS, rotation=20)
    ax.set_ylim(0, 105)
    ax.set_ylabel("%")
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def plot_error_breakdown(errors: Mapping[str, int], path: str | Path) -> Path:
    items = sorted(errors.items())
    fig, ax = plt.subplots(figsize=(7, 0.4 * max(len(items), 1) + 1.2))
    ax.barh([k for k, _ in items], [v for _, v in items], color="tab:red")
    ax.invert_yaxis()
    ax.set_xlabel("count")
    if not items:
        ax.text(0.5, 0.5, "no errors", ha="center", va="center", transform=ax.transAxes)
    fig.tight_layout()
    return _save(fig, path)


def plot_required_histogram(histogram: Mapping[int, int], path: str | Path) -> Path:
    keys = sorted(int(k) for k in histogram)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(keys, [histogram[k] if k in histogram else histogram[str(k)] for k in keys])
    ax.set_xlabel("required parameters per tool")
    ax.set_ylabel("tools")
    fig.tight_layout()
    return _save(fig, path)


def plot_generation_curve(cumulative: Sequence[int], path: str | Path, label: str = "accepted") -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(range(1, len(cumulative) + 1), list(cumulative), marker=".")
    ax.set_xlabel("batch")
    ax.set_ylabel(f"cumulative {label}")
    fig.tight_layout()
    return _save(fig, path)

"""Report figures rendered with the Agg backend (PNG, no timestamp metadata)."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=110, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_ablation_deltas(ablations: Sequence[dict], path, metric: str = "macro_f1") -> Path:
    """Grouped bars of full minus ablated ``metric`` per cohort, with run spread."""
    labels = sorted({(a["model"], a["ablated"].split("/")[-1]) for a in ablations})
    cohorts = list(dict.fromkeys(a["cohort"] for a in ablations))
    fig, ax = plt.subplots(figsize=(max(5.0, 1.6 * len(cohorts) + 2), 3.8))
    width = 0.8 / max(1, len(labels))
    x = np.arange(len(cohorts))
    for k, (model, removed) in enumerate(labels):
        heights, errs = [], []
        for c in cohorts:
            hit = [a for a in ablations if a["cohort"] == c and a["model"] == model
                   and a["ablated"].split("/")[-1] == removed]
            runs = [r[metric] for r in hit[0]["run_deltas"]] if hit else [0.0]
            heights.append(hit[0]["delta"][metric] if hit else 0.0)
            errs.append(float(np.std(runs)))
        ax.bar(x + (k - (len(labels) - 1) / 2) * width, heights, width, yerr=errs, capsize=3,
               label=f"{model}: {removed}")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(x, cohorts)
    ax.set_ylabel(f"{metric} delta (full - ablated)")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_metrics(experiments: Sequence[dict], path, metrics: Sequence[str] = ("roc_auc", "macro_f1")) -> Path:
    fig, axes = plt.subplots(1, len(metrics), figsize=(5.0 * len(metrics), 3.8), squeeze=False)
    names = [f"{e['model']}/{e['cohort']}/{e['feature_set']}" for e in experiments]
    y = np.arange(len(names))
    for ax, metric in zip(axes[0], metrics):
        means = [e["mean"][metric] for e in experiments]
        stds = [e["std"][metric] for e in experiments]
        ax.barh(y, means, xerr=stds, capsize=2, color="tab:blue")
        ax.set_yticks(y, names, fontsize=7)
        ax.invert_yaxis()
        ax.set_xlim(0.0, 1.0)
        ax.set_xlabel(metric)
    return _save(fig, path)


def plot_attributions(names: Sequence[str], values: np.ndarray, path, title: str = "") -> Path:
    """Horizontal bars of mean absolute attribution per feature, largest on top."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(-values, kind="stable")
    fig, ax = plt.subplots(figsize=(5.5, 0.25 * len(names) + 1.2))
    ax.barh(np.arange(len(names)), values[order], color="tab:orange")
    ax.set_yticks(np.arange(len(names)), [names[i] for i in order], fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("mean |attribution|")
    if title:
        ax.set_title(title, fontsize=9)
    return _save(fig, path)

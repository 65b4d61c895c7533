"""Static report figures (PNG, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluate import MODERATE_METS, VIGOROUS_METS, MetsCategory  # noqa: E402

_DPI = 110
_META = {"Software": "vo2tcn"}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata=_META)
    plt.close(fig)
    return path


def ewma(values, alpha: float = 0.5) -> np.ndarray:
    out = np.empty(len(values))
    acc = None
    for i, v in enumerate(values):
        acc = v if acc is None else alpha * v + (1 - alpha) * acc
        out[i] = acc
    return out


def plot_grid(results, path):
    """Best validation MSE against receptive field, one series per filter count."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for f in sorted({r.filters for r in results}):
        rows = sorted((r for r in results if r.filters == f), key=lambda r: r.receptive_field)
        rf = np.array([r.receptive_field for r in rows])
        mse = np.array([r.best_val_mse for r in rows])
        sc = ax.scatter(rf, mse, s=14, alpha=0.6, label=f"{f} filters")
        ax.plot(rf, ewma(mse), color=sc.get_facecolor()[0], alpha=0.9, lw=1.2)
    ax.set_xlabel("receptive field [s]")
    ax.set_ylabel("best validation MSE (standardized)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_history(history, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [h.epoch for h in history]
    ax.plot(epochs, [h.train_mse for h in history], label="train")
    ax.plot(epochs, [h.val_mse for h in history], label="validation")
    best = min(history, key=lambda h: h.val_mse)
    ax.axvline(best.epoch, color="grey", ls=":", lw=1)
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE (standardized)")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_bland_altman(means, diffs, groups, report, path, title="V̇O₂ agreement"):
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    groups = np.asarray(groups)
    for g in np.unique(groups):
        sel = groups == g
        ax.scatter(np.asarray(means)[sel], np.asarray(diffs)[sel], s=2, alpha=0.35, label=str(g))
    ax.axhline(report.bias, color="k", lw=1.2)
    for v in (report.loa_low, report.loa_high):
        ax.axhline(v, color="k", ls="--", lw=1)
    ax.set_xlabel("mean of true and predicted [ml/min]")
    ax.set_ylabel("predicted − true [ml/min]")
    ax.set_title(f"{title}: bias {report.bias:.1f}, LoA [{report.loa_low:.1f}, {report.loa_high:.1f}]",
                 fontsize=9)
    if len(np.unique(groups)) <= 12:
        ax.legend(fontsize=7, markerscale=4, ncol=2)
    return _save(fig, path)


def plot_mets_trace(mets_true, mets_pred, path):
    fig, ax = plt.subplots(figsize=(10, 3.8))
    x = np.arange(len(mets_true))
    ax.plot(x, mets_true, lw=0.8, label="true")
    ax.plot(x, mets_pred, lw=0.8, alpha=0.8, label="predicted")
    for level in (MODERATE_METS, VIGOROUS_METS):
        ax.axhline(level, color="grey", ls="--", lw=0.8)
    ax.set_xlabel("second (test protocols concatenated)")
    ax.set_ylabel("METs")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_confusion(cm, path):
    fig, ax = plt.subplots(figsize=(4.5, 4))
    counts = cm.counts
    ax.imshow(counts, cmap="Blues")
    labels = [c.label for c in MetsCategory]
    ax.set_xticks(range(3), labels)
    ax.set_yticks(range(3), labels)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    peak = counts.max() if counts.size else 0
    for i in range(3):
        for j in range(3):
            ax.text(j, i, str(counts[i, j]), ha="center", va="center",
                    color="white" if peak and counts[i, j] > peak / 2 else "black")
    ax.set_title(f"accuracy {100 * cm.accuracy:.1f}% of {cm.total} s", fontsize=9)
    return _save(fig, path)


def plot_predictions(traces, path):
    """``traces`` is a list of ``(title, time, true, pred)`` tuples, one panel each."""
    n = max(1, len(traces))
    fig, axes = plt.subplots(n, 1, figsize=(9, 2.2 * n), squeeze=False)
    for ax, (title, t, y, p) in zip(axes[:, 0], traces):
        ax.plot(t, y, lw=0.8, label="true")
        ax.plot(t, p, lw=0.8, label="predicted")
        ax.set_title(title, fontsize=9)
        ax.set_ylabel("V̇O₂ [ml/min]", fontsize=8)
    axes[-1, 0].set_xlabel("time [s]")
    axes[0, 0].legend(fontsize=8)
    return _save(fig, path)

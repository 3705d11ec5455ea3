"""Static matplotlib figures written next to tabular reports."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}  # keeps PNG bytes independent of the matplotlib version string


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_training_curves(log, path, title=""):
    """Loss and accuracy per epoch, train and validation."""
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    epochs = log.column("epoch")
    ax_loss.plot(epochs, log.column("train_loss"), label="train")
    ax_acc.plot(epochs, log.column("train_acc"), label="train")
    val_loss = log.column("val_loss")
    if np.isfinite(val_loss).any():
        ax_loss.plot(epochs, val_loss, label="validation")
        ax_acc.plot(epochs, log.column("val_acc"), label="validation")
    if log.best_epoch is not None:
        for ax in (ax_loss, ax_acc):
            ax.axvline(log.best_epoch, color="grey", linestyle=":", linewidth=1)
    ax_loss.set(xlabel="epoch", ylabel="loss")
    ax_acc.set(xlabel="epoch", ylabel="accuracy")
    ax_loss.legend()
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_confusion(cm, path, title=""):
    counts = cm.counts.astype(np.float64)
    support = counts.sum(axis=1, keepdims=True)
    share = np.divide(counts, support, out=np.zeros_like(counts), where=support > 0)
    size = max(4.0, 0.35 * cm.k + 2)
    fig, ax = plt.subplots(figsize=(size, size))
    im = ax.imshow(share, cmap="Blues", vmin=0, vmax=1)
    ax.set_xticks(range(cm.k), cm.class_names, rotation=90, fontsize=7)
    ax.set_yticks(range(cm.k), cm.class_names, fontsize=7)
    ax.set(xlabel="predicted", ylabel="true")
    if cm.k <= 12:
        for i in range(cm.k):
            for j in range(cm.k):
                ax.text(j, i, int(cm.counts[i, j]), ha="center", va="center", fontsize=7,
                        color="white" if share[i, j] > 0.5 else "black")
    fig.colorbar(im, ax=ax, fraction=0.046, label="row share")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def _row_label(row):
    label = row["variant"] or "?"
    if row["variant"] == "temporal_cnn" and row["nb_conv_layers"] is not None:
        label = f"{row['nb_conv_layers']}/{row['nb_conv_units']}/{row['nb_fc_units']} f{row['filter_size']}" \
                f" d{row['dropout']:g} b{row['batch_size']}"
    return f"{label} s{row['seed']}"


def plot_accuracy_bars(table, path, title=""):
    """OA per trial, with reference values as markers where known."""
    rows = [r for r in table.rows if r["status"] == "ok" and r["oa"] is not None]
    fig, ax = plt.subplots(figsize=(max(5.0, 0.6 * len(rows) + 2), 4))
    x = np.arange(len(rows))
    best = table.best
    colors = ["tab:orange" if r is best else "tab:blue" for r in rows]
    ax.bar(x, [r["oa"] for r in rows], color=colors)
    refs = [(i, r["reference_oa"]) for i, r in enumerate(rows) if r["reference_oa"] is not None]
    if refs:
        ax.scatter([i for i, _ in refs], [v for _, v in refs], color="black", marker="_", s=200, zorder=3,
                   label="reference")
        ax.legend(loc="lower right")
    ax.set_xticks(x, [_row_label(r) for r in rows], rotation=60, ha="right", fontsize=7)
    lo = min([r["oa"] for r in rows] + [v for _, v in refs]) if rows else 0
    ax.set_ylim(max(0.0, lo - 5), 100)
    ax.set_ylabel("overall accuracy (%)")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_timing(table, path, title=""):
    """Mean seconds per epoch per model on a log scale."""
    rows = [r for r in table.rows if r["status"] == "ok" and r["seconds_per_epoch"] is not None]
    fig, ax = plt.subplots(figsize=(max(5.0, 0.8 * len(rows) + 2), 4))
    x = np.arange(len(rows))
    ax.bar(x, [r["seconds_per_epoch"] for r in rows], color="tab:green")
    ax.set_yscale("log")
    ax.set_xticks(x, [_row_label(r) for r in rows], rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("seconds per epoch")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def results_figures(table, out_dir) -> list:
    """Accuracy and timing figures for a results table; returns the written paths."""
    written = []
    if any(r["status"] == "ok" and r["oa"] is not None for r in table.rows):
        written.append(plot_accuracy_bars(table, os.path.join(out_dir, "accuracy.png"), table.title))
    if any(r["status"] == "ok" and r["seconds_per_epoch"] is not None for r in table.rows):
        written.append(plot_timing(table, os.path.join(out_dir, "timing.png"), table.title))
    return written

"""Static figures written next to the CSV outputs of the CLI."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import extract_segments  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.frameon": False,
}


def _shade_segments(ax, labels, offset=0):
    for s, e in extract_segments(labels):
        ax.axvspan(s + offset - 0.5, e + offset - 0.5, color="tab:red", alpha=0.2, lw=0)


def plot_score_trace(path, values, trace, tau=None, title=None):
    """Observed series (top) and anomaly scores (bottom), labeled segments shaded."""
    idx = np.arange(len(trace.scores)) + trace.index_offset
    with plt.rc_context(STYLE):
        fig, (top, bottom) = plt.subplots(2, 1, figsize=(10, 4.5), sharex=True)
        top.plot(idx, values, lw=0.7, color="tab:blue")
        top.set_ylabel("value")
        _shade_segments(top, trace.labels, trace.index_offset)
        bottom.plot(idx, trace.scores, lw=0.7, color="tab:gray")
        _shade_segments(bottom, trace.labels, trace.index_offset)
        if tau is not None and np.isfinite(tau):
            bottom.axhline(tau, color="tab:red", lw=0.8, ls="--", label=f"threshold {tau:.3g}")
            bottom.legend(loc="upper right")
        bottom.set_ylabel("anomaly score")
        bottom.set_xlabel("index")
        if title:
            top.set_title(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_history(path, history):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        epochs = np.arange(history.epochs)
        ax.plot(epochs, history.train_loss, label="train")
        ax.plot(epochs, history.val_loss, label="validation")
        if history.best_epoch >= 0:
            ax.axvline(history.best_epoch, color="k", lw=0.6, ls=":")
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("MSE")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_grid(path, rows, metric="auprc"):
    """One line per ``n_terms`` showing ``metric`` against the window length."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for n in sorted({r["n_terms"] for r in rows}):
            sel = sorted((r for r in rows if r["n_terms"] == n), key=lambda r: r["window_len"])
            ax.plot([r["window_len"] for r in sel], [r[metric] for r in sel], marker="o", label=f"N={n}")
        ax.set_xlabel("window length T")
        ax.set_ylabel(metric)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)

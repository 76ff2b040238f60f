"""Figure rendering for sweep and training outputs.

Figures are written next to the delimited result files; pyplot is imported
lazily so library use never drags in a GUI backend.
"""

from __future__ import annotations

import logging
import os

import numpy as np

__all__ = ["plot_ber", "plot_loss"]

log = logging.getLogger(__name__)

_MARKERS = ["o", "s", "^", "v", "D", "x", "*", "P"]


def _plt():
    os.environ.setdefault("MPLBACKEND", "Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_ber(results, path, title: str | None = None) -> None:
    """BER-vs-SNR curves, one per detector, with binomial error bars."""
    plt = _plt()
    by_detector: dict[str, list] = {}
    for r in results:
        by_detector.setdefault(r.detector, []).append(r)

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for i, (name, rows) in enumerate(by_detector.items()):
        rows = sorted(rows, key=lambda r: r.snr_db)
        snr = np.array([r.snr_db for r in rows])
        ber = np.array([r.ber for r in rows])
        ci = np.array([r.confidence() for r in rows])
        # clip to a displayable floor so zero-error points stay on the plot
        floor = 1e-7
        yerr = np.vstack([np.maximum(ber - ci[:, 0], 0.0), np.maximum(ci[:, 1] - ber, 0.0)])
        ax.errorbar(
            snr,
            np.maximum(ber, floor),
            yerr=yerr,
            marker=_MARKERS[i % len(_MARKERS)],
            capsize=3,
            label=name,
        )
    ax.set_yscale("log")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("BER")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    log.info("wrote figure %s", path)


def plot_loss(history, path, title: str | None = None) -> None:
    """Training-loss curve over optimizer steps."""
    plt = _plt()
    history = np.asarray(history, dtype=float)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(np.arange(1, history.size + 1), history, lw=0.8)
    if history.size >= 50:
        w = max(history.size // 50, 5)
        smooth = np.convolve(history, np.ones(w) / w, mode="valid")
        ax.plot(np.arange(w, history.size + 1), smooth, lw=1.8, label=f"{w}-batch mean")
        ax.legend()
    ax.set_xlabel("batch")
    ax.set_ylabel("training loss")
    ax.grid(True, alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    log.info("wrote figure %s", path)

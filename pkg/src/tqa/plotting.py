"""Matplotlib figures: DET curves, one utterance's KL evidence, error breakdown.

Figures are written without timestamps and with a fixed SVG id salt so
reruns give identical files.
"""

from __future__ import annotations

from statistics import NormalDist

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "tqa"

# probit axis range, in probabilities
_LO, _HI = 0.001, 0.5
_TICKS = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4]
_ND = NormalDist()


def probit(p):
    p = np.clip(np.asarray(p, dtype=np.float64), _LO / 2, 1 - _LO / 2)
    return np.vectorize(_ND.inv_cdf)(p)


def _save(fig, path):
    fmt = str(path).rsplit(".", 1)[-1].lower()
    meta = {"Date": None} if fmt == "svg" else ({"CreationDate": None} if fmt == "pdf" else None)
    fig.savefig(path, metadata=meta)
    plt.close(fig)


def plot_det(curves: dict, path, eers: dict | None = None):
    """Overlay DET curves (name -> DetCurve) on normal-deviate axes."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for name, c in curves.items():
        label = name
        if eers and name in eers:
            label += f" (EER {100 * eers[name].rate:.2f}%)"
        ax.plot(probit(c.fpr), probit(c.fnr), label=label)
    ticks = probit(_TICKS)
    labels = [f"{100 * t:g}" for t in _TICKS]
    ax.set_xticks(ticks, labels)
    ax.set_yticks(ticks, labels)
    lim = probit([_LO, _HI])
    ax.set_xlim(*lim)
    ax.set_ylim(*lim)
    ax.plot(lim, lim, color="0.7", lw=0.8, ls="--")
    ax.set_xlabel("False positive rate (%)")
    ax.set_ylabel("False negative rate (%)")
    ax.grid(True, lw=0.3)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_utterance(P, Q, raw, smooth, path, phones=None, title=""):
    """Alignment and classifier posteriorgrams over the raw and smoothed KL tracks."""
    fig, axes = plt.subplots(3, 1, figsize=(8, 6), sharex=True)
    for ax, M, name in ((axes[0], P, "alignment"), (axes[1], Q, "classifier")):
        vals = M.values if hasattr(M, "values") else np.asarray(M)
        ax.imshow(vals.T, aspect="auto", origin="lower", interpolation="nearest", cmap="Greys")
        ax.set_ylabel(name)
        if phones is not None and len(phones) <= 12:
            ax.set_yticks(range(len(phones)), phones)
    r = raw.values if hasattr(raw, "values") else np.asarray(raw)
    s = smooth.values if hasattr(smooth, "values") else np.asarray(smooth)
    axes[2].plot(r, lw=0.6, color="0.6", label="KL")
    axes[2].plot(s, lw=1.2, color="C3", label="median smoothed")
    axes[2].set_ylabel("symmetric KL")
    axes[2].set_xlabel("frame")
    axes[2].legend(fontsize=8)
    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_error_breakdown(report, path):
    """Bar chart of insertion, deletion and substitution rates in percent."""
    kinds = ["Insertion", "Deletion", "Substitution"]
    rates = [100 * report.insertion_rate, 100 * report.deletion_rate, 100 * report.substitution_rate]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    bars = ax.bar(kinds, rates, color=["C0", "C1", "C2"])
    for b, r in zip(bars, rates):
        ax.annotate(f"{r:.2f}%", (b.get_x() + b.get_width() / 2, b.get_height()),
                    ha="center", va="bottom", fontsize=8)
    ax.set_ylabel("rate (% of reference words)")
    ax.set_title(f"WER {100 * report.wer:.2f}%, sentence error rate {100 * report.ser:.1f}%")
    fig.tight_layout()
    _save(fig, path)

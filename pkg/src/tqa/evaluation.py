"""Word alignment taxonomy, DET curves and equal error rate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core_io import LabeledScore


@dataclass(frozen=True)
class EditBreakdown:
    insertions: int = 0
    deletions: int = 0
    substitutions: int = 0
    hits: int = 0

    def __post_init__(self):
        if min(self.insertions, self.deletions, self.substitutions, self.hits) < 0:
            raise ValueError("edit counts must be non-negative")

    @property
    def ref_len(self) -> int:
        return self.hits + self.deletions + self.substitutions

    @property
    def edits(self) -> int:
        return self.insertions + self.deletions + self.substitutions

    def __add__(self, other):
        return EditBreakdown(self.insertions + other.insertions, self.deletions + other.deletions,
                             self.substitutions + other.substitutions, self.hits + other.hits)


def levenshtein_align(hyp: Sequence, ref: Sequence) -> EditBreakdown:
    """Minimum unit-cost alignment of ``hyp`` against ``ref``.

    On equal cost the backtrace prefers a diagonal step (hit or
    substitution), then an insertion, then a deletion.
    """
    hyp, ref = list(hyp), list(ref)
    H, R = len(hyp), len(ref)
    d = np.zeros((H + 1, R + 1), dtype=np.int64)
    d[:, 0] = np.arange(H + 1)
    d[0, :] = np.arange(R + 1)
    for i in range(1, H + 1):
        for j in range(1, R + 1):
            d[i, j] = min(d[i - 1, j - 1] + (hyp[i - 1] != ref[j - 1]),
                          d[i - 1, j] + 1, d[i, j - 1] + 1)
    ins = dels = subs = hits = 0
    i, j = H, R
    while i or j:
        if i and j and d[i, j] == d[i - 1, j - 1] + (hyp[i - 1] != ref[j - 1]):
            if hyp[i - 1] == ref[j - 1]:
                hits += 1
            else:
                subs += 1
            i, j = i - 1, j - 1
        elif i and d[i, j] == d[i - 1, j] + 1:
            ins += 1
            i -= 1
        else:
            dels += 1
            j -= 1
    return EditBreakdown(ins, dels, subs, hits)


@dataclass(frozen=True)
class CorpusReport:
    sentences: int
    erroneous_sentences: int
    ref_words: int
    insertions: int
    deletions: int
    substitutions: int

    @property
    def wer(self):
        return (self.insertions + self.deletions + self.substitutions) / self.ref_words

    @property
    def ser(self):
        return self.erroneous_sentences / self.sentences

    @property
    def insertion_rate(self):
        return self.insertions / self.ref_words

    @property
    def deletion_rate(self):
        return self.deletions / self.ref_words

    @property
    def substitution_rate(self):
        return self.substitutions / self.ref_words

    def as_rows(self):
        return [("sentences", self.sentences), ("erroneous_sentences", self.erroneous_sentences),
                ("ref_words", self.ref_words),
                ("insertion_rate", self.insertion_rate), ("deletion_rate", self.deletion_rate),
                ("substitution_rate", self.substitution_rate),
                ("wer", self.wer), ("ser", self.ser)]


def corpus_report(breakdowns: Sequence[EditBreakdown], sentence_labels=None) -> CorpusReport:
    """Aggregate rates; WER is total edits over total reference words.

    A sentence counts as erroneous when it has at least one edit, unless
    ``sentence_labels`` (``"correct"``/``"erroneous"`` or booleans) is given.
    """
    if not breakdowns:
        raise ValueError("no sentences")
    total = EditBreakdown()
    for b in breakdowns:
        total = total + b
    if total.ref_len == 0:
        raise ValueError("total reference length is zero")
    if sentence_labels is None:
        bad = sum(1 for b in breakdowns if b.edits > 0)
    else:
        bad = sum(1 for lab in sentence_labels if lab is True or lab == "erroneous")
    return CorpusReport(len(breakdowns), bad, total.ref_len,
                        total.insertions, total.deletions, total.substitutions)


@dataclass(frozen=True, eq=False)
class DetCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    fnr: np.ndarray

    @property
    def points(self):
        return list(zip(self.thresholds.tolist(), self.fpr.tolist(), self.fnr.tolist()))

    def to_tsv(self) -> str:
        return "".join(f"{t:.6f}\t{a:.6f}\t{b:.6f}\n" for t, a, b in self.points)


def sweep(lo: float, hi: float, n: int) -> np.ndarray:
    if n < 2 or not hi > lo:
        raise ValueError("sweep needs n >= 2 points over a non-empty range")
    return np.linspace(lo, hi, n)


# default sweeps: oracle WER lives in [0, 1], KL std in [0, 20]
WER_SWEEP = (0.0, 1.0, 1001)
KL_SWEEP = (0.0, 20.0, 2001)


def det_curve(scores: Sequence[LabeledScore], thresholds) -> DetCurve:
    """False positive / false negative rates for "erroneous iff score > threshold"."""
    if isinstance(thresholds, tuple) and len(thresholds) == 3:
        thresholds = sweep(*thresholds)
    thr = np.asarray(thresholds, dtype=np.float64)
    if thr.ndim != 1 or thr.size == 0:
        raise ValueError("thresholds must be a non-empty 1-D sequence")
    thr = np.sort(thr)
    labels = np.array([s.label for s in scores])
    vals = np.array([s.score for s in scores], dtype=np.float64)
    pos = np.sort(vals[labels == "erroneous"])
    neg = np.sort(vals[labels == "correct"])
    if pos.size == 0 or neg.size == 0:
        raise SingleClassError(
            f"need both classes: {neg.size} correct, {pos.size} erroneous")
    # count of scores <= threshold
    fpr = 1.0 - np.searchsorted(neg, thr, side="right") / neg.size
    fnr = np.searchsorted(pos, thr, side="right") / pos.size
    return DetCurve(thr, fpr, fnr)


class SingleClassError(ValueError):
    pass


@dataclass(frozen=True)
class EqualErrorRate:
    rate: float
    threshold: float
    bracketed: bool  # False when the curve never crosses FPR = FNR


def eer(curve: DetCurve) -> EqualErrorRate:
    """Point where FPR equals FNR, interpolated linearly between sweep points."""
    if curve.thresholds.size == 0:
        raise ValueError("empty curve")
    fpr, fnr, thr = curve.fpr, curve.fnr, curve.thresholds
    diff = fpr - fnr
    zero = np.flatnonzero(diff == 0)
    if zero.size:
        i = zero[0]
        return EqualErrorRate(float(fpr[i]), float(thr[i]), True)
    cross = np.flatnonzero((diff[:-1] > 0) & (diff[1:] < 0))
    if cross.size:
        i = cross[0]
        f = diff[i] / (diff[i] - diff[i + 1])
        rate = fpr[i] + f * (fpr[i + 1] - fpr[i])
        return EqualErrorRate(float(rate), float(thr[i] + f * (thr[i + 1] - thr[i])), True)
    i = int(np.argmin(np.abs(diff)))
    return EqualErrorRate(float((fpr[i] + fnr[i]) / 2), float(thr[i]), False)


def auc(curve: DetCurve) -> float:
    """Area under the ROC implied by the sweep (diagnostic only)."""
    tpr = 1.0 - curve.fnr
    x = np.concatenate([[1.0], curve.fpr, [0.0]])
    y = np.concatenate([[1.0], tpr, [0.0]])
    return float(-np.trapezoid(y, x))

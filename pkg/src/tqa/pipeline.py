"""Per-utterance scoring for both detectors, plus the worker pool."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .core_io import LabeledScore, Lexicon, PhoneSet, Posteriorgram, Transcript
from .decode import DecodeConfig, DecodeError, beam_decode, oracle_wer
from .kl_detect import DEFAULT_FLOOR, SmoothingConfig, score_utterance
from .lm import NGramModel, build_biased_lm, count_corpus, top_frequent_unigram, train_kn
from .phone_rec import PhoneGraphConfig, lattice_reestimate

JOBS_ENV = "TQA_JOBS"
Q_SOURCES = ("raw", "reestimated")


def default_jobs():
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class KLOptions:
    smoothing: SmoothingConfig = SmoothingConfig()
    floor: float = DEFAULT_FLOOR
    q_source: str = "reestimated"
    phone_graph: PhoneGraphConfig = PhoneGraphConfig()
    exclude_phones: tuple = ()

    def __post_init__(self):
        if self.q_source not in Q_SOURCES:
            raise ValueError(f"q_source must be one of {Q_SOURCES}")


@dataclass(frozen=True)
class BiasedOptions:
    lam: float = 0.9
    top_n: int = 100
    order: int = 4
    decode: DecodeConfig = DecodeConfig()
    general_lm: bool = False
    general_order: int = 3
    floor: float = DEFAULT_FLOOR
    retries: int = 2  # beam doublings allowed when no hypothesis survives


def kl_score(alignment, Q: Posteriorgram, ps: PhoneSet, opts: KLOptions = KLOptions()):
    """Std of the smoothed KL track between the alignment and the classifier."""
    if opts.q_source == "reestimated":
        Q = lattice_reestimate(Q, opts.phone_graph, opts.floor)
    score, _, _ = score_utterance(alignment, Q, ps, opts.smoothing, opts.floor,
                                  exclude_phones=opts.exclude_phones)
    return score


def background_unigram(train_text, top_n=100) -> NGramModel:
    return top_frequent_unigram(train_text, top_n)


def general_lm(train_text, lex: Lexicon, order=3) -> NGramModel:
    """Corpus-level KN model used for the baseline arm."""
    return train_kn(count_corpus(train_text, order), vocab=lex.words)


def wer_score(t: Transcript, Q: Posteriorgram, lex: Lexicon, lm: NGramModel,
              opts: BiasedOptions = BiasedOptions()):
    """Clamped lattice-oracle WER of the transcript against a decode of ``Q``.

    ``lm`` is the background unigram for the biased arm or the general
    model when ``opts.general_lm`` is set. Returns ``(clamped, oracle)``.
    """
    model = lm if opts.general_lm else build_biased_lm(t, lm, opts.lam, opts.order)
    lat = decode_widening(Q, lex, model, opts.decode, opts.floor, opts.retries)
    res = oracle_wer(lat, t)
    return res.clamped_rate, res


def decode_widening(Q, lex, lm, cfg: DecodeConfig, floor=DEFAULT_FLOOR, retries=2):
    """Decode, doubling the beam after each pruning failure (``retries`` times)."""
    for i in range(retries + 1):
        try:
            return beam_decode(Q, lex, lm, cfg, floor)
        except DecodeError:
            if i == retries:
                raise
            cfg = replace(cfg, beam=cfg.beam * 2)


@dataclass
class BatchResult:
    scores: list  # LabeledScore, sorted by utt_id
    failures: list = field(default_factory=list)  # (utt_id, message)

    @property
    def ok(self):
        return not self.failures


def _safe(fn, item):
    uid = item[0]
    try:
        return uid, fn(*item[1:]), None
    except Exception as exc:  # quarantined per utterance
        return uid, None, f"{type(exc).__name__}: {exc}"


def _call(args):
    return _safe(*args)


def run_batch(fn, items, labels=None, jobs=1) -> BatchResult:
    """Apply ``fn`` to ``(utt_id, *args)`` items; failures are collected, not raised.

    ``fn`` must return a float score (or a tuple whose first entry is one).
    Output order is by utt_id whatever the scheduling.
    """
    labels = labels or {}
    work = [(fn, it) for it in items]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_call, work, chunksize=max(1, len(work) // (jobs * 8))))
    else:
        out = [_call(w) for w in work]
    scores, failures = [], []
    for uid, val, err in out:
        if err is not None:
            failures.append((uid, err))
            continue
        if isinstance(val, tuple):
            val = val[0]
        scores.append(LabeledScore(uid, float(val), labels.get(uid)))
    scores.sort(key=lambda s: s.utt_id)
    failures.sort()
    return BatchResult(scores, failures)

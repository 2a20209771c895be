"""Frame-wise symmetric KL between alignment and classifier posteriorgrams.

The per-utterance confidence is the population standard deviation of the
median-smoothed KL track; a larger spread means a transcription error is
more likely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .align import DEFAULT_EPSILON, alignment_to_posteriorgram
from .core_io import Alignment, PhoneSet, Posteriorgram

DEFAULT_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class KLTrack:
    utt_id: str
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError(f"{self.utt_id}: KL track must be finite and non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def T(self):
        return self.values.size


@dataclass(frozen=True)
class SmoothingConfig:
    N: int = 7  # half-window; 15-frame median by default

    def __post_init__(self):
        if self.N < 0:
            raise ValueError("median half-window N must be >= 0")

    @property
    def window(self):
        return 2 * self.N + 1


def _floor_renorm(x, floor):
    x = np.maximum(x, floor)
    # sorted summation makes the normaliser independent of column order
    return x / np.sort(x, axis=-1).sum(axis=-1, keepdims=True)


def _check_rows(x, name):
    if np.any(x < 0) or np.any(np.abs(x.sum(axis=-1) - 1.0) > 1e-4):
        raise ValueError(f"{name} is not a stochastic distribution")


def _symmetric_kl_rows(p, q, floor):
    p = _floor_renorm(p, floor)
    q = _floor_renorm(q, floor)
    # (p-q)(log p - log q) pairs both directions' summands, so swapping
    # arguments flips both signs and leaves every term bit-identical
    terms = (p - q) * (np.log(p) - np.log(q))
    return np.sort(terms, axis=-1).sum(axis=-1)


def frame_kl(p, q, floor=DEFAULT_FLOOR) -> float:
    """Symmetric KL divergence D(p||q) + D(q||p) in nats between two frames."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    if floor <= 0:
        raise ValueError("floor must be positive")
    _check_rows(p, "p")
    _check_rows(q, "q")
    return float(max(_symmetric_kl_rows(p, q, floor), 0.0))


def kl_track(P: Posteriorgram, Q: Posteriorgram, floor=DEFAULT_FLOOR, utt_id="") -> KLTrack:
    if P.values.shape != Q.values.shape:
        raise ValueError(f"shape mismatch: P is {P.values.shape}, Q is {Q.values.shape}")
    if floor <= 0:
        raise ValueError("floor must be positive")
    d = _symmetric_kl_rows(P.values, Q.values, floor)
    return KLTrack(utt_id, np.maximum(d, 0.0))


def _truncated_median(x, N):
    T = x.size
    out = np.empty(T)
    w = 2 * N + 1
    if T >= w:
        out[N:T - N] = np.median(sliding_window_view(x, w), axis=1)
        edges = list(range(min(N, T))) + list(range(max(T - N, N), T))
    else:
        edges = range(T)
    for t in edges:
        out[t] = np.median(x[max(0, t - N):min(T, t + N + 1)])
    return out


def median_smooth(track: KLTrack, cfg: SmoothingConfig = SmoothingConfig()) -> KLTrack:
    """Median over [t-N, t+N], with the window truncated (never padded) at the edges."""
    if track.T == 0 or cfg.N == 0:
        return KLTrack(track.utt_id, track.values.copy())
    return KLTrack(track.utt_id, _truncated_median(track.values, cfg.N))


def utterance_score(track: KLTrack, mask=None) -> float:
    """Population standard deviation of a (smoothed) KL track.

    ``mask`` optionally selects the frames that take part, e.g. to leave
    silence out.
    """
    v = track.values if mask is None else track.values[np.asarray(mask, dtype=bool)]
    if v.size == 0:
        raise ValueError(f"{track.utt_id}: cannot score an empty track")
    if v.max() == v.min():
        return 0.0
    return float(np.std(v))


def detect(score: float, threshold: float) -> str:
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    return "erroneous" if score > threshold else "correct"


def score_utterance(alignment: Alignment, Q: Posteriorgram, ps: PhoneSet,
                    smoothing=SmoothingConfig(), floor=DEFAULT_FLOOR,
                    epsilon=DEFAULT_EPSILON, exclude_phones=()):
    """Alignment + classifier posteriorgram -> (score, raw track, smoothed track)."""
    if alignment.num_frames != Q.T:
        raise ValueError(
            f"{alignment.utt_id}: alignment covers {alignment.num_frames} frames, posteriorgram has {Q.T}")
    P = alignment_to_posteriorgram(alignment, ps, epsilon)
    raw = kl_track(P, Q, floor, utt_id=alignment.utt_id)
    smooth = median_smooth(raw, smoothing)
    mask = None
    if exclude_phones:
        mask = ~np.isin(alignment.frame_labels(), list(exclude_phones))
        if not mask.any():
            mask = None
    return utterance_score(smooth, mask), raw, smooth

"""Uniform-prior phone recognizer over a flat phone loop.

Every frame is emitted by one phone. A path pays ``switch_penalty`` nats
each time the phone changes and must stay at least ``min_duration`` frames
in a phone before leaving it (the final segment may be shorter). All phones
share the same prior, so no prior term appears anywhere.

The search state is ``(phone, d)`` with ``d`` the frames spent in the
current phone, capped at ``min_duration``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .core_io import Alignment, Posteriorgram
from .kl_detect import DEFAULT_FLOOR

NEG_INF = -np.inf


@dataclass(frozen=True)
class PhoneGraphConfig:
    switch_penalty: float = 2.0
    min_duration: int = 3
    beam: float = 8.0

    def __post_init__(self):
        if self.switch_penalty < 0:
            raise ValueError("switch_penalty must be >= 0")
        if self.min_duration < 1:
            raise ValueError("min_duration must be >= 1")
        if not self.beam > 0:
            raise ValueError("beam must be > 0")


@dataclass(frozen=True)
class PhoneSegmentation:
    segments: tuple  # (phone, start frame, duration)
    score: float

    @property
    def num_frames(self):
        return sum(d for _, _, d in self.segments)

    def frame_labels(self):
        return np.concatenate([np.full(d, p, dtype=np.int64) for p, _, d in self.segments])

    def to_alignment(self, utt_id) -> Alignment:
        return Alignment(utt_id, tuple((p, d) for p, _, d in self.segments))


def emission_scores(Q: Posteriorgram, floor=DEFAULT_FLOOR):
    return np.log(np.maximum(Q.values, floor))


def path_score(labels, emissions, switch_penalty) -> float:
    """Score of a per-frame phone sequence, summed with correct rounding."""
    labels = np.asarray(labels)
    terms = list(emissions[np.arange(labels.size), labels])
    switches = int(np.count_nonzero(labels[1:] != labels[:-1]))
    terms.append(-switch_penalty * switches)
    return math.fsum(terms)


@numba.njit(cache=True)
def _best_excluding(v):
    # max of v[j] for j != k, for every k, via the top two entries
    K = v.size
    i1 = 0
    for k in range(1, K):
        if v[k] > v[i1]:
            i1 = k
    m2 = -np.inf
    for k in range(K):
        if k != i1 and v[k] > m2:
            m2 = v[k]
    out = np.empty(K)
    for k in range(K):
        out[k] = m2 if k == i1 else v[i1]
    return out


@numba.njit(cache=True)
def _lse_excluding(v):
    K = v.size
    out = np.empty(K)
    for k in range(K):
        m = -np.inf
        for j in range(K):
            if j != k and v[j] > m:
                m = v[j]
        if m == -np.inf:
            out[k] = -np.inf
            continue
        s = 0.0
        for j in range(K):
            if j != k:
                s += np.exp(v[j] - m)
        out[k] = m + np.log(s)
    return out


@numba.njit(cache=True)
def _viterbi_forward(e, pen, D):
    T, K = e.shape
    delta = np.full((T, K, D), -np.inf)
    for k in range(K):
        delta[0, k, 0] = e[0, k]
    for t in range(1, T):
        enter = _best_excluding(delta[t - 1, :, D - 1])
        for k in range(K):
            delta[t, k, 0] = enter[k] - pen + e[t, k]
            for d in range(1, D):
                best = delta[t - 1, k, d - 1]
                if d == D - 1 and delta[t - 1, k, D - 1] > best:
                    best = delta[t - 1, k, D - 1]
                delta[t, k, d] = best + e[t, k]
            if D == 1:
                stay = delta[t - 1, k, 0] + e[t, k]
                if stay > delta[t, k, 0]:
                    delta[t, k, 0] = stay
    return delta


@numba.njit(cache=True)
def _viterbi_backward(e, pen, D):
    T, K = e.shape
    beta = np.full((T, K, D), -np.inf)
    beta[T - 1] = 0.0
    for t in range(T - 2, -1, -1):
        v = np.empty(K)
        for k in range(K):
            v[k] = e[t + 1, k] + beta[t + 1, k, 0]
        enter = _best_excluding(v)
        for k in range(K):
            for d in range(D):
                nd = d + 1 if d + 1 < D else D - 1
                best = e[t + 1, k] + beta[t + 1, k, nd]
                if d == D - 1:
                    sw = enter[k] - pen
                    if sw > best:
                        best = sw
                beta[t, k, d] = best
    return beta


@numba.njit(cache=True)
def _trace(e, beta, pen, D):
    # follows exact maxima of beta; scanning phones upward keeps the
    # lexicographically smallest labelling among optimal paths
    T, K = e.shape
    labels = np.empty(T, dtype=np.int64)
    best_k = 0
    best_v = e[0, 0] + beta[0, 0, 0]
    for k in range(1, K):
        v = e[0, k] + beta[0, k, 0]
        if v > best_v:
            best_v = v
            best_k = k
    k = best_k
    d = 0
    labels[0] = k
    for t in range(T - 1):
        bk = -1
        bv = -np.inf
        bd = 0
        for j in range(K):
            if j == k:
                nd = d + 1 if d + 1 < D else D - 1
                v = e[t + 1, j] + beta[t + 1, j, nd]
            elif d == D - 1:
                nd = 0
                v = e[t + 1, j] + beta[t + 1, j, 0] - pen
            else:
                continue
            if v > bv:
                bv = v
                bk = j
                bd = nd
        k = bk
        d = bd
        labels[t + 1] = k
    return labels


@numba.njit(cache=True)
def _forward(e, alive, pen, D):
    T, K = e.shape
    alpha = np.full((T, K, D), -np.inf)
    for k in range(K):
        if alive[0, k, 0]:
            alpha[0, k, 0] = e[0, k]
    for t in range(1, T):
        enter = _lse_excluding(alpha[t - 1, :, D - 1])
        for k in range(K):
            for d in range(D):
                if not alive[t, k, d]:
                    continue
                if d == 0:
                    a = enter[k] - pen
                    if D == 1:
                        a = np.logaddexp(a, alpha[t - 1, k, 0])
                elif d < D - 1:
                    a = alpha[t - 1, k, d - 1]
                else:
                    a = np.logaddexp(alpha[t - 1, k, d - 1], alpha[t - 1, k, d])
                alpha[t, k, d] = a + e[t, k]
    return alpha


@numba.njit(cache=True)
def _backward(e, alive, pen, D):
    T, K = e.shape
    b = np.full((T, K, D), -np.inf)
    for k in range(K):
        for d in range(D):
            if alive[T - 1, k, d]:
                b[T - 1, k, d] = 0.0
    for t in range(T - 2, -1, -1):
        v = np.empty(K)
        for k in range(K):
            v[k] = e[t + 1, k] + b[t + 1, k, 0]
        enter = _lse_excluding(v)
        for k in range(K):
            for d in range(D):
                if not alive[t, k, d]:
                    continue
                nd = d + 1 if d + 1 < D else D - 1
                acc = e[t + 1, k] + b[t + 1, k, nd]
                if d == D - 1:
                    acc = np.logaddexp(acc, enter[k] - pen)
                b[t, k, d] = acc
    return b


def _check(Q):
    if Q.T < 1:
        raise ValueError("posteriorgram has no frames")


def _segments(labels):
    segs = []
    start = 0
    for t in range(1, labels.size + 1):
        if t == labels.size or labels[t] != labels[start]:
            segs.append((int(labels[start]), start, t - start))
            start = t
    return tuple(segs)


def viterbi_decode(Q: Posteriorgram, cfg: PhoneGraphConfig = PhoneGraphConfig(),
                   floor=DEFAULT_FLOOR) -> PhoneSegmentation:
    """Best phone segmentation of ``Q``; ties go to the lower phone index."""
    _check(Q)
    e = emission_scores(Q, floor)
    beta = _viterbi_backward(e, float(cfg.switch_penalty), cfg.min_duration)
    labels = _trace(e, beta, float(cfg.switch_penalty), cfg.min_duration)
    return PhoneSegmentation(_segments(labels), path_score(labels, e, cfg.switch_penalty))


def surviving_states(Q: Posteriorgram, cfg: PhoneGraphConfig = PhoneGraphConfig(), floor=DEFAULT_FLOOR):
    """Boolean T x K x D mask of lattice states kept by the beam.

    A state survives when the best complete path through it scores within
    ``beam`` of the overall best path.
    """
    _check(Q)
    e = emission_scores(Q, floor)
    pen, D = float(cfg.switch_penalty), cfg.min_duration
    through = _viterbi_forward(e, pen, D) + _viterbi_backward(e, pen, D)
    best = through[0].max()
    with np.errstate(invalid="ignore"):
        return np.isfinite(through) & (through >= best - cfg.beam)


def lattice_reestimate(Q: Posteriorgram, cfg: PhoneGraphConfig = PhoneGraphConfig(),
                       floor=DEFAULT_FLOOR) -> Posteriorgram:
    """Phone occupation probabilities from forward-backward over the pruned lattice.

    Phones with no surviving path at a frame get ``floor`` mass before the
    rows are renormalised.
    """
    _check(Q)
    e = emission_scores(Q, floor)
    pen, D = float(cfg.switch_penalty), cfg.min_duration
    alive = surviving_states(Q, cfg, floor)
    alpha = _forward(e, alive, pen, D)
    beta = _backward(e, alive, pen, D)
    log_z = np.logaddexp.reduce(alpha[-1].reshape(-1))
    with np.errstate(under="ignore"):
        occ = np.exp(alpha + beta - log_z).sum(axis=2)
    occ = np.maximum(occ, floor)
    return Posteriorgram(occ / occ.sum(axis=1, keepdims=True))

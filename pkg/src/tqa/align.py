"""Alignment and state-posterior conversion to phone posteriorgrams."""

import numpy as np

from .core_io import Alignment, PhoneSet, Posteriorgram, RowNotStochasticError, StateToPhoneMap

DEFAULT_EPSILON = 1e-4


def alignment_to_posteriorgram(a: Alignment, ps: PhoneSet, epsilon=DEFAULT_EPSILON) -> Posteriorgram:
    """One-hot posteriorgram of a forced alignment, softened by ``epsilon``.

    Each frame puts ``1 - epsilon`` on the aligned phone and spreads
    ``epsilon`` evenly over the other ``K - 1`` phones. The aligned phone
    absorbs the rounding so every row sums to exactly 1.
    """
    K = ps.K
    a.check(ps)
    if epsilon < 0 or (K > 1 and epsilon >= 1.0 / K) or (K == 1 and epsilon != 0):
        raise ValueError(f"epsilon must lie in [0, 1/K) = [0, {1.0 / K:g}), got {epsilon!r}")
    labels = a.frame_labels()
    T = labels.size
    cold = epsilon / (K - 1) if K > 1 else 0.0
    values = np.full((T, K), cold)
    hot = 1.0 - cold * (K - 1)
    values[np.arange(T), labels] = hot
    return Posteriorgram(values)


def merge_state_posteriors(states, m: StateToPhoneMap, K=None, tol=1e-6) -> Posteriorgram:
    """Sum state posteriors into the phone each state maps to.

    ``states`` is a T x S array whose rows are distributions over HMM
    states. ``K`` defaults to ``max(map) + 1``.
    """
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2:
        raise ValueError("state posteriors must be a T x S matrix")
    S = states.shape[1]
    if S != m.state_count:
        raise ValueError(f"{S} state columns but the map covers {m.state_count} states")
    sums = states.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > tol) or np.any(states < 0):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise RowNotStochasticError(f"state posterior row {bad} sums to {sums[bad]!r}")
    phone_of = np.asarray(m.map, dtype=np.int64)
    if K is None:
        K = int(phone_of.max()) + 1
    if phone_of.max() >= K:
        raise ValueError(f"state map refers to phone {phone_of.max()} but K={K}")
    out = np.zeros((states.shape[0], K))
    np.add.at(out.T, phone_of, states.T)
    return Posteriorgram(out, tol=tol)

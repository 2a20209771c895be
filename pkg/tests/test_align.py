import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tqa.align import alignment_to_posteriorgram, merge_state_posteriors
from tqa.core_io import Alignment, PhoneSet, StateToPhoneMap


def test_one_hot_at_zero_epsilon():
    post = alignment_to_posteriorgram(Alignment("u", ((0, 2),)), PhoneSet(("a", "b")), 0.0)
    assert post.values.tolist() == [[1.0, 0.0], [1.0, 0.0]]


def test_epsilon_formula():
    ps = PhoneSet(("a", "b", "c"))
    post = alignment_to_posteriorgram(Alignment("u", ((0, 1), (1, 1))), ps, 1e-4)
    assert post.values[0] == pytest.approx([0.9999, 5e-5, 5e-5], abs=1e-15)
    assert post.values[1] == pytest.approx([5e-5, 0.9999, 5e-5], abs=1e-15)
    assert np.all(post.values.sum(axis=1) == 1.0)


def test_epsilon_range():
    ps = PhoneSet(("a", "b"))
    a = Alignment("u", ((0, 1),))
    for bad in (-0.1, 0.5, 1.0):
        with pytest.raises(ValueError):
            alignment_to_posteriorgram(a, ps, bad)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.lists(st.tuples(st.integers(0, 5), st.integers(1, 4)), min_size=1, max_size=6),
       st.floats(0, 0.999))
def test_argmax_is_aligned_phone(K, segs, frac):
    segs = [(p % K, d) for p, d in segs]
    a = Alignment("u", tuple(segs))
    post = alignment_to_posteriorgram(a, PhoneSet(tuple(map(str, range(K)))), frac / K)
    assert np.array_equal(post.values.argmax(axis=1), a.frame_labels())


def test_merge_all_to_one_phone():
    out = merge_state_posteriors(np.array([[0.2, 0.3, 0.5]]), StateToPhoneMap((0, 0, 0)))
    assert out.values.tolist() == [[1.0]]


def test_merge_identity():
    x = np.random.default_rng(0).dirichlet(np.ones(4), size=5)
    out = merge_state_posteriors(x, StateToPhoneMap(range(4)))
    assert np.array_equal(out.values, x)


def test_merge_matches_bruteforce():
    rng = np.random.default_rng(1)
    for _ in range(50):
        x = rng.dirichlet(np.ones(6), size=4)
        m = rng.integers(0, 3, size=6)
        out = merge_state_posteriors(x, StateToPhoneMap(m), K=3)
        ref = np.zeros((4, 3))
        for t in range(4):
            for s in range(6):
                ref[t, m[s]] += x[t, s]
        assert np.allclose(out.values, ref, atol=1e-15)


def test_merge_errors():
    with pytest.raises(ValueError):
        merge_state_posteriors(np.array([[0.5, 0.5]]), StateToPhoneMap((0,)))
    with pytest.raises(ValueError):
        merge_state_posteriors(np.array([[0.7, 0.5]]), StateToPhoneMap((0, 1)))

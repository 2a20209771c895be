import math
from collections import Counter
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tqa.lm import (BOS, EOS, LOG_ZERO, UNK, build_biased_lm, count_corpus, count_ngrams,
                    interpolate, perplexity, read_arpa, top_frequent_unigram, train_kn, write_arpa)


def test_count_example():
    c = count_ngrams("a b a".split(), 2)
    assert dict(c[1]) == {("a",): 2, ("b",): 1, (BOS,): 1, (EOS,): 1}
    assert dict(c[2]) == {(BOS, "a"): 1, ("a", "b"): 1, ("b", "a"): 1, ("a", EOS): 1}


def test_count_empty_and_conservation():
    c = count_ngrams([], 3)
    assert dict(c[1]) == {(BOS,): 1, (EOS,): 1}
    corpus = [["x", "y"], ["y"], ["z", "z", "x"]]
    assert count_corpus(corpus, 3).num_tokens == 6
    with pytest.raises(ValueError):
        count_ngrams(["a"], 5)


def _hand_kn_abab():
    # corpus "<s> a b a b </s>", vocabulary {a, b, </s>, <unk>}, D = 1/2 at both orders
    D = F(1, 2)
    V = 4
    cont = {"a": 2, "b": 1, EOS: 1, UNK: 0}  # distinct left neighbours
    total = sum(cont.values())
    seen = sum(1 for c in cont.values() if c)
    uni = {w: max(c - D, 0) / total + D * seen / total / V for w, c in cont.items()}
    # bigram successors: a -> {b: 2}, b -> {a: 1, </s>: 1}
    p_b_a = (2 - D) / 2 + D * 1 / 2 * uni["b"]
    p_a_b = (1 - D) / 2 + D * 2 / 2 * uni["a"]
    return uni, p_b_a, p_a_b


def test_hand_worked_bigram_kn():
    uni, p_b_a, p_a_b = _hand_kn_abab()
    assert sum(uni.values()) == 1
    m = train_kn(count_ngrams("a b a b".split(), 2), discount=0.5)
    assert m.prob(["a"], "b") == pytest.approx(float(p_b_a), abs=1e-9)
    assert m.prob(["b"], "a") == pytest.approx(float(p_a_b), abs=1e-9)
    assert float(p_b_a) == 0.8046875 and float(p_a_b) == 0.484375
    for w in ("a", "b", EOS, UNK):
        assert m.prob([], w) == pytest.approx(float(uni[w]), abs=1e-12)


def _contexts(m):
    yield ()
    yield from m.contexts
    yield ("never", "seen", "before")


def _assert_normalised(m, tol=1e-6):
    for h in _contexts(m):
        s = sum(m.distribution(list(h)).values())
        assert abs(s - 1) <= tol, (h, s)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.sampled_from("abcde"), max_size=7), min_size=1, max_size=6),
       st.integers(1, 4), st.sampled_from([None, 0.3, 0.75]))
def test_every_context_normalised(corpus, order, D):
    m = train_kn(count_corpus(corpus, order), discount=D, vocab=["extra"])
    _assert_normalised(m)


def test_unseen_word_positive_and_never_minus_inf():
    m = train_kn(count_corpus([["a", "b"]], 3), vocab=["zz"])
    assert m.prob(["a"], "zz") > 0
    assert m.prob(["a", "b"], "not-in-vocab") > 0  # maps to <unk>
    assert math.isfinite(m.logprob(["q"], "r"))


def test_default_discount():
    # the top order uses raw counts: n1 = 2 bigrams seen once, n2 = 3 seen twice
    m = train_kn(count_corpus([["a", "b"], ["a", "b"], ["c"]], 2))
    raw = Counter({(BOS, "a"): 2, ("a", "b"): 2, ("b", EOS): 2, (BOS, "c"): 1, ("c", EOS): 1})
    n1 = sum(1 for c in raw.values() if c == 1)
    n2 = sum(1 for c in raw.values() if c == 2)
    D = n1 / (n1 + 2 * n2)
    # p(b | a): only successor, so (2 - D)/2 + D/2 * p_uni(b)
    pu = m.prob([], "b")
    assert m.prob(["a"], "b") == pytest.approx((2 - D) / 2 + D / 2 * pu, abs=1e-12)


def test_empty_counts_rejected():
    with pytest.raises(ValueError):
        train_kn(count_corpus([], 2))


def test_top_frequent_unigram():
    m = top_frequent_unigram([["a", "a", "b"]], 1)
    assert set(m.vocab) == {"a", UNK}
    assert m.prob([], "a") == pytest.approx(2 / 3)
    full = top_frequent_unigram([["a", "a", "b"]], 10)
    assert full.prob([], "b") == pytest.approx(1 / 3)
    assert UNK in full.vocab and full.prob([], UNK) == 0.0


def test_top_frequent_matches_sort():
    rng = np.random.default_rng(0)
    corpus = [[f"w{int(x)}" for x in rng.zipf(1.5, size=10) if x < 500] for _ in range(2000)]
    m = top_frequent_unigram(corpus, 100)
    freq = Counter(w for s in corpus for w in s)
    expect = {w for w, _ in sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))[:100]}
    assert set(m.vocab) - {UNK} == expect


def test_biased_lm_endpoints_and_background_mass():
    bg = top_frequent_unigram([["p", "q", "q", "r"]], 2)
    t = ["x", "y", "z"]
    lm = build_biased_lm(t, bg, lam=0.9)
    _assert_normalised(lm)
    assert lm.prob(["x", "y"], "q") > 0
    # lambda close to its endpoints
    hi = build_biased_lm(t, bg, lam=1 - 1e-12)
    utt = train_kn(count_ngrams(t, 4), vocab=bg.vocab)
    for h in [(BOS,), (BOS, "x"), ("x", "y")]:
        for w in ("x", "y", "z", EOS):
            assert hi.prob(list(h), w) == pytest.approx(utt.prob(list(h), w), abs=1e-9)
    lo = build_biased_lm(t, bg, lam=1e-12)
    for h in [(BOS,), ("x", "y")]:
        for w in bg.vocab:
            assert lo.prob(list(h), w) == pytest.approx(bg.prob([], w), abs=1e-9)
    with pytest.raises(ValueError):
        build_biased_lm([], bg)


def test_biased_perplexity_lower_than_background():
    bg = top_frequent_unigram([["p", "q", "x"], ["q"]], 100)
    t = ["x", "y", "z", "x"]
    assert perplexity(build_biased_lm(t, bg), [t]) < perplexity(bg, [t])


def test_interpolate_validation_and_uniform():
    u = top_frequent_unigram([["a", "b", "c"]], 10)
    assert u.logprob([], "a") == pytest.approx(math.log(1 / 3))
    with pytest.raises(ValueError):
        interpolate([u], [0.5])


def test_state_and_row_consistent():
    m = train_kn(count_corpus([["a", "b", "c"], ["b", "c", "a"]], 3))
    for hist in ([BOS], [BOS, "a"], ["a", "b"], ["c", "c"], ["zz", "b"]):
        s = m.state(hist)
        row = m.row(s)
        for w in m.vocab:
            assert row[m.word_id[w]] == pytest.approx(m.logprob(hist, w), abs=1e-12)


def test_arpa_roundtrip():
    m = train_kn(count_corpus([["a", "b", "a"], ["b", "c"]], 3), vocab=["d"])
    r = read_arpa(write_arpa(m))
    assert r.order == 3 and set(r.vocab) == set(m.vocab)
    for h in [(), (BOS,), ("a",), ("a", "b"), ("c", "c")]:
        for w in m.vocab:
            assert r.logprob(list(h), w) == pytest.approx(m.logprob(list(h), w), abs=1e-9)
    assert m.logprob(["a"], "nothing") > LOG_ZERO

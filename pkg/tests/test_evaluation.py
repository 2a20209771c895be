import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import edit_scripts
from tqa.core_io import LabeledScore
from tqa.evaluation import (KL_SWEEP, WER_SWEEP, EditBreakdown, SingleClassError, auc, corpus_report,
                            det_curve, eer, levenshtein_align, sweep)


def test_levenshtein_examples():
    assert levenshtein_align("a b c".split(), "a b c".split()) == EditBreakdown(0, 0, 0, 3)
    assert levenshtein_align("a c".split(), "a b c".split()) == EditBreakdown(0, 1, 0, 2)
    assert levenshtein_align("a x b c".split(), "a b c".split()) == EditBreakdown(1, 0, 0, 3)
    assert levenshtein_align([], "a b".split()) == EditBreakdown(0, 2, 0, 0)


def test_tie_break_prefers_substitution():
    # "x" vs "y": one substitution or insertion + deletion; cost 1 only for substitution
    assert levenshtein_align(["x"], ["y"]) == EditBreakdown(0, 0, 1, 0)
    # "a b" vs "b a": two substitutions tie with insertion + deletion
    assert levenshtein_align(["a", "b"], ["b", "a"]) == EditBreakdown(0, 0, 2, 0)


def test_levenshtein_exhaustive_small():
    vocab = "abc"
    for lh, lr in itertools.product(range(4), range(4)):
        for hyp in itertools.product(vocab, repeat=lh):
            for ref in itertools.product(vocab, repeat=lr):
                got = levenshtein_align(hyp, ref)
                scripts = edit_scripts(hyp, ref)
                best = min(i + d + s for i, d, s, _ in scripts)
                assert got.edits == best
                assert (got.insertions, got.deletions, got.substitutions, got.hits) in scripts
                assert got.ref_len == lr


def test_levenshtein_random_length_six():
    rng = np.random.default_rng(0)
    for _ in range(200):
        hyp = tuple(rng.choice(list("abc"), size=int(rng.integers(0, 7))))
        ref = tuple(rng.choice(list("abc"), size=int(rng.integers(0, 7))))
        got = levenshtein_align(hyp, ref)
        best = min(i + d + s for i, d, s, _ in edit_scripts(hyp, ref))
        assert got.edits == best


def test_corpus_report_arithmetic():
    rows = [EditBreakdown(0, 0, 1, 9)] + [EditBreakdown(0, 0, 0, 10)] * 9
    rep = corpus_report(rows)
    assert rep.wer == pytest.approx(0.01) and rep.ser == pytest.approx(0.1)
    zero = corpus_report([EditBreakdown(0, 0, 0, 5)] * 3)
    assert zero.wer == 0 and zero.ser == 0
    with pytest.raises(ValueError):
        corpus_report([])
    with pytest.raises(ValueError):
        corpus_report([EditBreakdown()])


def test_corpus_wer_is_ratio_of_sums():
    rows = [EditBreakdown(1, 0, 0, 1), EditBreakdown(0, 1, 2, 17)]
    assert corpus_report(rows).wer == 4 / 21


def _scores(pos, neg):
    return ([LabeledScore(f"e{i}", v, "erroneous") for i, v in enumerate(pos)]
            + [LabeledScore(f"c{i}", v, "correct") for i, v in enumerate(neg)])


def test_det_extremes_and_separation():
    s = _scores([0.8, 0.9], [0.1, 0.2])
    c = det_curve(s, WER_SWEEP)
    assert (c.fpr[0], c.fnr[0]) == (1.0, 0.0) or c.thresholds[0] >= 0.1
    low = det_curve(s, [0.0])
    assert (low.fpr[0], low.fnr[0]) == (1.0, 0.0)
    assert any(f == 0 and n == 0 for f, n in zip(c.fpr, c.fnr))
    assert eer(c).rate == 0.0


def test_det_tie_counts_as_correct():
    c = det_curve(_scores([0.5], [0.5]), [0.5])
    assert (c.fpr[0], c.fnr[0]) == (0.0, 1.0)


def test_single_class_error():
    with pytest.raises(SingleClassError):
        det_curve(_scores([], [0.1, 0.2]), WER_SWEEP)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 20), min_size=1, max_size=30), st.lists(st.floats(0, 20), min_size=1, max_size=30))
def test_det_monotone(pos, neg):
    c = det_curve(_scores(pos, neg), KL_SWEEP)
    assert np.all(np.diff(c.fpr) <= 0) and np.all(np.diff(c.fnr) >= 0)
    assert np.all((0 <= c.fpr) & (c.fpr <= 1) & (0 <= c.fnr) & (c.fnr <= 1))
    assert 0 <= eer(c).rate <= 1


def test_eer_interpolates():
    from tqa.evaluation import DetCurve
    c = DetCurve(np.array([0.0, 1.0]), np.array([0.6, 0.2]), np.array([0.2, 0.4]))
    e = eer(c)
    # fpr - fnr goes 0.4 -> -0.2, crossing two thirds of the way
    assert e.rate == pytest.approx(1 / 3) and e.bracketed
    assert e.threshold == pytest.approx(2 / 3)


def test_eer_without_crossing_is_flagged():
    from tqa.evaluation import DetCurve
    e = eer(DetCurve(np.array([0.0, 1.0]), np.array([0.5, 0.4]), np.array([0.1, 0.2])))
    assert not e.bracketed and e.rate == pytest.approx(0.3)


def test_random_scores_give_half():
    rng = np.random.default_rng(1)
    rates = []
    for seed in range(5):
        x = rng.random(10_000)
        lab = rng.random(10_000) < 0.5
        s = [LabeledScore(str(i), v, "erroneous" if l else "correct") for i, (v, l) in enumerate(zip(x, lab))]
        rates.append(eer(det_curve(s, WER_SWEEP)).rate)
    assert abs(np.mean(rates) - 0.5) < 0.02


def test_eer_stable_under_refinement_and_affine_map():
    rng = np.random.default_rng(2)
    pos, neg = rng.gamma(4, 1.5, 400), rng.gamma(2, 1.5, 1600)
    s = _scores(pos, neg)
    base = eer(det_curve(s, KL_SWEEP)).rate
    dense = eer(det_curve(s, (0.0, 20.0, 20001))).rate
    assert abs(base - dense) < 0.005
    mapped = _scores(2 * pos + 1, 2 * neg + 1)
    assert abs(eer(det_curve(mapped, (1.0, 41.0, 2001))).rate - base) < 1e-9


def test_sweep_and_auc():
    assert sweep(0, 1, 1001)[1] == pytest.approx(0.001)
    with pytest.raises(ValueError):
        sweep(1, 0, 5)
    c = det_curve(_scores([0.9], [0.1]), WER_SWEEP)
    assert auc(c) == pytest.approx(1.0)

import numpy as np
import pytest

from oracles import best_decode_brute, levenshtein_brute, random_lattice
from tqa.core_io import Arc, Lexicon, Posteriorgram, WordLattice, parse_lattice
from tqa.decode import DecodeConfig, DecodeError, LexiconTree, OracleResult, beam_decode, oracle_wer
from tqa.lm import count_corpus, top_frequent_unigram, train_kn

WIDE = DecodeConfig(beam=1e9, max_active=10**9)


def _one_hot(labels, K, eps=0.0):
    Q = np.full((len(labels), K), eps / max(K - 1, 1))
    Q[np.arange(len(labels)), labels] = 1 - eps if K > 1 else 1
    return Posteriorgram(Q)


def test_single_word():
    lex = Lexicon({"ab": [(0, 1)]})
    lm = top_frequent_unigram([["ab"]], 10)
    lat = beam_decode(_one_hot([0, 0, 1, 1], 2), lex, lm)
    assert [w for w, _ in lat.paths()] == [("ab",)]


def test_homophones_give_parallel_arcs():
    lex = Lexicon({"too": [(0, 1)], "two": [(0, 1)]})
    lm = top_frequent_unigram([["too", "two"]], 10)
    lat = beam_decode(_one_hot([0, 0, 1, 1], 2), lex, lm)
    words = [a for a in lat.arcs if a.word != "<eps>"]
    assert {a.word for a in words} == {"too", "two"}
    assert len({(a.src, a.dst) for a in words}) == 1


def test_matches_exhaustive_segmentation():
    rng = np.random.default_rng(7)
    lex = Lexicon({"x": [(0, 1)], "y": [(1,)], "z": [(2, 0), (2,)]})
    lm = train_kn(count_corpus([["x", "y"], ["z", "x"], ["y", "y", "z"]], 2))
    for _ in range(25):
        T = int(rng.integers(1, 9))
        Q = rng.dirichlet(np.full(3, 0.5), size=T)
        for lmw, wip in ((1.0, 0.0), (0.5, -1.0)):
            cfg = DecodeConfig(beam=1e9, max_active=10**9, lm_weight=lmw, word_insertion_penalty=wip)
            lat = beam_decode(Posteriorgram(Q), lex, lm, cfg)
            words, score = lat.best_path()
            b_score, b_words = best_decode_brute(Q, lex, lm, lmw, wip)
            assert score == pytest.approx(b_score, abs=1e-9)
            assert words == b_words


def test_best_path_in_lattice_and_topology():
    lex = Lexicon({"x": [(0, 1)], "y": [(1,)], "z": [(2, 0)]})
    lm = train_kn(count_corpus([["x", "y"], ["z", "x"]], 2))
    Q = np.random.default_rng(1).dirichlet(np.ones(3), size=10)
    lat = beam_decode(Posteriorgram(Q), lex, lm, WIDE)
    best = lat.best_path()
    assert best[0] in [w for w, _ in lat.paths()]
    assert lat.topological_order()[0] == 0


def test_decode_errors():
    lm = top_frequent_unigram([["a"]], 10)
    with pytest.raises(DecodeError):
        beam_decode(_one_hot([0], 1), Lexicon({}), lm)
    with pytest.raises(DecodeError):
        beam_decode(_one_hot([0, 0], 2), Lexicon({"q": [(0,)]}), lm)
    # a three-phone word cannot fit in two frames
    with pytest.raises(DecodeError):
        beam_decode(_one_hot([0, 0], 2), Lexicon({"a": [(0, 1, 0)]}), lm)
    for bad in (dict(beam=0), dict(max_active=0)):
        with pytest.raises(ValueError):
            DecodeConfig(**bad)


def test_lexicon_tree_shares_prefixes():
    lex = Lexicon({"ab": [(0, 1)], "ac": [(0, 2)], "a": [(0,)]})
    tree = LexiconTree(lex, {"ab": 0, "ac": 1, "a": 2})
    assert tree.num_nodes == 4  # root, a, ab, ac
    assert tree.ends[tree.root_children[0]] == (2,)


def test_oracle_examples():
    single = parse_lattice("0\t1\ta\t0\n1\t2\tb\t0\n2\t3\tc\t0\nfinal\t3\n")
    assert oracle_wer(single, "a b c".split()).edits == 0
    two = parse_lattice("0\t1\ta\t0\n1\t2\tb\t0\n1\t2\tx\t-1\n2\t3\tc\t0\nfinal\t3\n")
    assert oracle_wer(two, "a b c".split()).edits == 0
    r = oracle_wer(single, [])
    assert (r.edits, r.ref_len, r.rate) == (3, 0, 3.0)
    assert r.clamped_rate == 1.0
    assert OracleResult(1, 4).rate == 0.25


def test_oracle_matches_path_enumeration():
    rng = np.random.default_rng(8)
    vocab = ["a", "b", "c", "d"]
    for _ in range(150):
        lat = random_lattice(rng, vocab)
        ref = [vocab[int(i)] for i in rng.integers(0, 4, size=int(rng.integers(0, 6)))]
        brute = min(levenshtein_brute(tuple(w), tuple(ref)) for w, _ in lat.paths())
        assert oracle_wer(lat, ref).edits == brute


def test_oracle_bounded_by_best_path_and_monotone():
    rng = np.random.default_rng(9)
    vocab = ["a", "b", "c"]
    for _ in range(100):
        lat = random_lattice(rng, vocab)
        ref = [vocab[int(i)] for i in rng.integers(0, 3, size=4)]
        o = oracle_wer(lat, ref).edits
        assert o <= levenshtein_brute(lat.best_path()[0], tuple(ref))
        # add a parallel arc on an existing edge
        a = lat.arcs[int(rng.integers(len(lat.arcs)))]
        bigger = WordLattice(lat.arcs + (Arc(a.src, a.dst, vocab[int(rng.integers(3))], -1.0),), lat.finals)
        assert oracle_wer(bigger, ref).edits <= o


def test_wider_beam_never_worse():
    rng = np.random.default_rng(10)
    lex = Lexicon({w: [tuple(int(p) for p in rng.integers(0, 4, size=2))] for w in "abcdefg"})
    lm = train_kn(count_corpus([list("abc"), list("dcg"), list("fe")], 3), vocab=lex.words)
    for _ in range(20):
        words = [lex.words[int(i)] for i in rng.integers(0, 7, size=3)]
        labels = np.repeat([p for w in words for p in lex[w][0]], rng.integers(1, 4, size=6))
        Q = _one_hot(labels, 4, eps=0.4)
        prev = None
        for beam in (4.0, 8.0, 16.0, 1e9):
            try:
                lat = beam_decode(Q, lex, lm, DecodeConfig(beam=beam, max_active=10**9))
            except DecodeError:
                continue
            o = oracle_wer(lat, words).edits
            if prev is not None:
                assert o <= prev
            prev = o

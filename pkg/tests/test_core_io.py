import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tqa.core_io import (Alignment, Arc, BadMagicError, CycleDetectedError, DuplicateLabelError,
                         EmptyInputError, FormatError, LabeledScore, Lexicon, NoFinalNodeError,
                         PhoneSet, Posteriorgram, RowNotStochasticError, Transcript,
                         TruncatedPayloadError, UnknownPhoneError, UnreachableArcError, WordLattice,
                         ZeroDurationError, format_alignment, format_lattice, format_lexicon,
                         format_phoneset, format_scores, format_transcripts, parse_alignment,
                         parse_lattice, parse_lexicon, parse_phoneset, parse_scores,
                         parse_transcripts, read_posteriorgram, write_posteriorgram)

PS = parse_phoneset("a\nb\nc\n")


def test_parse_phoneset():
    assert PS.K == 3
    assert PS.symbols == ("a", "b", "c")
    assert PS.index("c") == 2 and PS.label(1) == "b"


def test_phoneset_duplicate_and_empty():
    with pytest.raises(DuplicateLabelError) as e:
        parse_phoneset("a\na\n")
    assert e.value.line == 2
    with pytest.raises(EmptyInputError):
        parse_phoneset("\n\n")


def test_phoneset_122_lines():
    ps = parse_phoneset("".join(f"ph{i}\n" for i in range(122)))
    assert ps.K == 122
    assert parse_phoneset(format_phoneset(ps)) == ps


def test_posteriorgram_layout():
    post = Posteriorgram(np.array([[1.0, 0.0], [0.5, 0.5]]))
    b = write_posteriorgram(post)
    assert len(b) == 16 + 16
    assert b[:8] == b"TQAPOST1"
    assert struct.unpack_from("<II", b, 8) == (2, 2)
    assert read_posteriorgram(b) == post


def test_posteriorgram_errors():
    good = write_posteriorgram(Posteriorgram(np.eye(3)))
    with pytest.raises(BadMagicError):
        read_posteriorgram(b"XXXXXXXX" + good[8:])
    with pytest.raises(TruncatedPayloadError):
        read_posteriorgram(good[:-1])
    with pytest.raises(TruncatedPayloadError):
        read_posteriorgram(good[:10])
    with pytest.raises(RowNotStochasticError):
        Posteriorgram(np.array([[0.9, 0.2]]))
    bad = struct.pack("<8sII", b"TQAPOST1", 1, 2) + np.array([0.9, 0.2], "<f4").tobytes()
    with pytest.raises(RowNotStochasticError):
        read_posteriorgram(bad)


@st.composite
def f32_posteriorgram_bytes(draw):
    T = draw(st.integers(0, 6))
    K = draw(st.integers(1, 5))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    v = rng.dirichlet(np.ones(K), size=T).astype("<f4") if T else np.zeros((0, K), "<f4")
    return struct.pack("<8sII", b"TQAPOST1", T, K) + v.tobytes()


@settings(max_examples=200, deadline=None)
@given(f32_posteriorgram_bytes())
def test_posteriorgram_roundtrip_bit_exact(b):
    assert write_posteriorgram(read_posteriorgram(b)) == b


def test_parse_alignment():
    [a] = parse_alignment("u1\ta:3 b:2\n", PS)
    assert a == Alignment("u1", ((0, 3), (1, 2)))
    assert a.num_frames == 5
    assert a.frame_labels().tolist() == [0, 0, 0, 1, 1]
    assert parse_alignment(format_alignment([a], PS), PS) == [a]


def test_parse_alignment_errors():
    with pytest.raises(ZeroDurationError):
        parse_alignment("u1\ta:0", PS)
    with pytest.raises(UnknownPhoneError):
        parse_alignment("u1\tzz:3", PS)
    with pytest.raises(FormatError):
        parse_alignment("u1 a:3", PS)
    with pytest.raises(FormatError):
        parse_alignment("u1\ta3", PS)


def test_phone_labels_with_colons():
    ps = PhoneSet(("d:e1", "x"))
    [a] = parse_alignment("u\td:e1:4 x:1", ps)
    assert a.segments == ((0, 4), (1, 1))


def test_transcripts_roundtrip_and_degenerate():
    ts = parse_transcripts("u1\ta b c\nu2\t\n")
    assert ts[0].words == ("a", "b", "c")
    assert ts[1].degenerate
    assert parse_transcripts(format_transcripts(ts)) == ts


def test_lexicon_roundtrip():
    lex = parse_lexicon("x\ta b\nx\tc\ny\tb\n", PS)
    assert lex["x"] == ((0, 1), (2,))
    assert parse_lexicon(format_lexicon(lex, PS), PS) == lex
    with pytest.raises(UnknownPhoneError):
        parse_lexicon("x\tq\n", PS)
    with pytest.raises(UnknownPhoneError):
        Lexicon({"x": [(5,)]}).check(3)
    with pytest.raises(FormatError):
        Lexicon({"x": [()]})


def test_lattice_single_path():
    lat = parse_lattice("0\t1\ta\t0.0\n1\t2\tb\t0.0\nfinal\t2\n")
    assert lat.paths() == [(("a", "b"), 0.0)]
    assert lat.topological_order() == (0, 1, 2)


def test_lattice_parallel_arcs():
    lat = parse_lattice("0\t1\ta\t-0.1\n0\t1\tx\t-2.3\nfinal\t1\n")
    assert sorted(w for w, _ in lat.paths()) == [("a",), ("x",)]
    assert lat.best_path() == (("a",), -0.1)
    assert parse_lattice(format_lattice(lat)) == lat


def test_lattice_errors():
    with pytest.raises(CycleDetectedError):
        parse_lattice("0\t1\ta\t0\n1\t0\tb\t0\n1\t2\tc\t0\nfinal\t2\n")
    with pytest.raises(NoFinalNodeError):
        parse_lattice("0\t1\ta\t0\n")
    with pytest.raises(UnreachableArcError):
        parse_lattice("0\t1\ta\t0\n3\t1\tb\t0\nfinal\t1\n")
    with pytest.raises(UnreachableArcError):
        parse_lattice("0\t1\ta\t0\n0\t2\tb\t0\nfinal\t1\n")
    with pytest.raises(FormatError):
        WordLattice((Arc(0, 1, "a", float("-inf")),), {1})
    with pytest.raises(FormatError):
        parse_lattice("0\t1\ta\n")


def test_scores_roundtrip():
    scores = [LabeledScore("u2", 0.25, "erroneous"), LabeledScore("u1", 3.0, "correct"),
              LabeledScore("u3", 1.5)]
    text = format_scores(scores)
    assert text.splitlines()[0] == "u1\t3.000000\tcorrect"
    assert parse_scores(text) == sorted(scores, key=lambda s: s.utt_id)
    with pytest.raises(FormatError):
        LabeledScore("u", 1.0, "maybe")
    with pytest.raises(FormatError):
        parse_scores("u1\tnan\tcorrect\n")

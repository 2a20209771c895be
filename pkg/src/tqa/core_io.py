"""Domain types and on-disk formats.

All text formats are UTF-8, TAB-separated, LF-terminated. Posteriorgrams
use a small binary container (magic ``TQAPOST1``, little-endian ``u32 T``,
``u32 K``, then ``T*K`` float32 values, row-major). Frames are 10 ms by
convention; the frame length is not stored.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

EPS_WORD = "<eps>"
POST_MAGIC = b"TQAPOST1"
_POST_HEADER = struct.Struct("<8sII")


class FormatError(ValueError):
    """Parse or validation failure. Carries a 1-based line or a byte offset when known."""

    def __init__(self, message, line=None, offset=None):
        where = ""
        if line is not None:
            where = f"line {line}: "
        elif offset is not None:
            where = f"byte {offset}: "
        super().__init__(where + message)
        self.line = line
        self.offset = offset


class DuplicateLabelError(FormatError):
    pass


class EmptyInputError(FormatError):
    pass


class BadMagicError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class RowNotStochasticError(FormatError):
    pass


class UnknownPhoneError(FormatError):
    pass


class ZeroDurationError(FormatError):
    pass


class CycleDetectedError(FormatError):
    pass


class NoFinalNodeError(FormatError):
    pass


class UnreachableArcError(FormatError):
    pass


@dataclass(frozen=True)
class PhoneSet:
    symbols: tuple

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        if not symbols:
            raise EmptyInputError("phone set is empty")
        index = {}
        for i, s in enumerate(symbols):
            if not isinstance(s, str) or not s or s != s.strip():
                raise FormatError(f"invalid phone label {s!r}", line=i + 1)
            if s in index:
                raise DuplicateLabelError(f"duplicate phone label {s!r}", line=i + 1)
            index[s] = i
        object.__setattr__(self, "_index", index)

    @property
    def K(self) -> int:
        return len(self.symbols)

    def __len__(self):
        return len(self.symbols)

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise UnknownPhoneError(f"unknown phone {label!r}") from None

    def __contains__(self, label):
        return label in self._index

    def label(self, i: int) -> str:
        return self.symbols[i]


def parse_phoneset(text: str) -> PhoneSet:
    labels = []
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        label = raw.strip()
        if not label:
            continue
        if label in seen:
            raise DuplicateLabelError(
                f"duplicate phone label {label!r} (first on line {seen[label]})", line=lineno)
        seen[label] = lineno
        labels.append(label)
    if not labels:
        raise EmptyInputError("phone set file is empty")
    return PhoneSet(tuple(labels))


def format_phoneset(ps: PhoneSet) -> str:
    return "".join(s + "\n" for s in ps.symbols)


def _check_stochastic(values, tol, what="row"):
    if values.ndim != 2:
        raise FormatError(f"posteriorgram must be 2-D, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise RowNotStochasticError("posteriorgram contains non-finite values")
    if values.size and (values.min() < -tol or values.max() > 1 + tol):
        bad = int(np.argwhere((values < -tol) | (values > 1 + tol))[0][0])
        raise RowNotStochasticError(f"{what} {bad} has entries outside [0, 1]")
    sums = values.sum(axis=1)
    off = np.abs(sums - 1.0) > tol
    if np.any(off):
        bad = int(np.argmax(off))
        raise RowNotStochasticError(f"{what} {bad} sums to {sums[bad]!r}")


@dataclass(frozen=True, eq=False)
class Posteriorgram:
    """T x K matrix of per-frame phone distributions (held as float64)."""

    values: np.ndarray
    tol: float = field(default=1e-6, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        _check_stochastic(v, self.tol)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Posteriorgram):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(np.all(self.values == other.values))

    __hash__ = None


def write_posteriorgram(post: Posteriorgram) -> bytes:
    payload = np.ascontiguousarray(post.values, dtype="<f4")
    return _POST_HEADER.pack(POST_MAGIC, post.T, post.K) + payload.tobytes()


def read_posteriorgram(data: bytes) -> Posteriorgram:
    if len(data) < _POST_HEADER.size:
        raise TruncatedPayloadError("header shorter than 16 bytes", offset=len(data))
    magic, T, K = _POST_HEADER.unpack_from(data)
    if magic != POST_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}", offset=0)
    need = _POST_HEADER.size + 4 * T * K
    if len(data) < need:
        raise TruncatedPayloadError(f"expected {need} bytes, got {len(data)}", offset=len(data))
    if len(data) > need:
        raise FormatError(f"{len(data) - need} trailing bytes", offset=need)
    values = np.frombuffer(data, dtype="<f4", count=T * K, offset=_POST_HEADER.size)
    # float32 payloads from external producers may drift further than 1e-6
    return Posteriorgram(values.astype(np.float64).reshape(T, K), tol=1e-4)


@dataclass(frozen=True)
class Alignment:
    utt_id: str
    segments: tuple  # of (phone index, duration in frames)

    def __post_init__(self):
        segs = tuple((int(p), int(d)) for p, d in self.segments)
        for p, d in segs:
            if d < 1:
                raise ZeroDurationError(f"{self.utt_id}: segment duration {d} < 1")
            if p < 0:
                raise UnknownPhoneError(f"{self.utt_id}: negative phone index {p}")
        object.__setattr__(self, "segments", segs)

    @property
    def num_frames(self) -> int:
        return sum(d for _, d in self.segments)

    @property
    def phones(self) -> tuple:
        return tuple(p for p, _ in self.segments)

    def frame_labels(self) -> np.ndarray:
        """Phone index of every frame."""
        if not self.segments:
            return np.zeros(0, dtype=np.int64)
        phones, durs = zip(*self.segments)
        return np.repeat(np.asarray(phones, dtype=np.int64), durs)

    def check(self, ps: PhoneSet):
        for p, _ in self.segments:
            if p >= ps.K:
                raise UnknownPhoneError(f"{self.utt_id}: phone index {p} >= K={ps.K}")


def parse_alignment(text: str, ps: PhoneSet) -> list:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise FormatError("expected 'utt_id<TAB>phone:dur ...'", line=lineno)
        utt_id, body = parts
        segs = []
        for tok in body.split():
            label, sep, dur = tok.rpartition(":")
            if not sep or not label:
                raise FormatError(f"malformed segment {tok!r}", line=lineno)
            try:
                d = int(dur)
            except ValueError:
                raise FormatError(f"non-integer duration in {tok!r}", line=lineno) from None
            if d <= 0:
                raise ZeroDurationError(f"non-positive duration in {tok!r}", line=lineno)
            if label not in ps:
                raise UnknownPhoneError(f"unknown phone {label!r}", line=lineno)
            segs.append((ps.index(label), d))
        if not segs:
            raise FormatError("alignment has no segments", line=lineno)
        out.append(Alignment(utt_id, tuple(segs)))
    return out


def format_alignment(alignments: Iterable[Alignment], ps: PhoneSet) -> str:
    lines = []
    for a in alignments:
        body = " ".join(f"{ps.label(p)}:{d}" for p, d in a.segments)
        lines.append(f"{a.utt_id}\t{body}\n")
    return "".join(lines)


@dataclass(frozen=True)
class StateToPhoneMap:
    map: tuple

    def __post_init__(self):
        m = tuple(int(x) for x in self.map)
        if any(x < 0 for x in m):
            raise FormatError("state map has negative phone index")
        object.__setattr__(self, "map", m)

    @property
    def state_count(self) -> int:
        return len(self.map)


@dataclass(frozen=True)
class Transcript:
    utt_id: str
    words: tuple

    def __post_init__(self):
        words = tuple(self.words)
        for w in words:
            if not w or any(c.isspace() for c in w):
                raise FormatError(f"{self.utt_id}: invalid word token {w!r}")
        object.__setattr__(self, "words", words)

    @property
    def degenerate(self) -> bool:
        return not self.words


def parse_transcripts(text: str) -> list:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        utt_id, sep, body = raw.partition("\t")
        if not sep or not utt_id:
            raise FormatError("expected 'utt_id<TAB>word word ...'", line=lineno)
        out.append(Transcript(utt_id, tuple(body.split())))
    return out


def format_transcripts(transcripts: Iterable[Transcript]) -> str:
    return "".join(f"{t.utt_id}\t{' '.join(t.words)}\n" for t in transcripts)


@dataclass(frozen=True)
class Lexicon:
    """Word to pronunciations (tuples of phone indices), in insertion order."""

    entries: Mapping

    def __post_init__(self):
        entries = {}
        for word, prons in self.entries.items():
            prons = tuple(tuple(int(p) for p in pron) for pron in prons)
            if not prons or any(not pron for pron in prons):
                raise FormatError(f"word {word!r} has an empty pronunciation")
            entries[word] = prons
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, word):
        return word in self.entries

    def __getitem__(self, word):
        return self.entries[word]

    @property
    def words(self) -> tuple:
        return tuple(self.entries)

    def check(self, K: int):
        for word, prons in self.entries.items():
            for pron in prons:
                if max(pron) >= K or min(pron) < 0:
                    raise UnknownPhoneError(f"word {word!r} uses a phone index outside [0, {K})")


def parse_lexicon(text: str, ps: PhoneSet) -> Lexicon:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        word, sep, body = raw.partition("\t")
        if not sep or not word:
            raise FormatError("expected 'word<TAB>phone phone ...'", line=lineno)
        labels = body.split()
        if not labels:
            raise FormatError(f"empty pronunciation for {word!r}", line=lineno)
        pron = []
        for lab in labels:
            if lab not in ps:
                raise UnknownPhoneError(f"unknown phone {lab!r}", line=lineno)
            pron.append(ps.index(lab))
        entries.setdefault(word, []).append(tuple(pron))
    if not entries:
        raise EmptyInputError("lexicon is empty")
    return Lexicon(entries)


def format_lexicon(lex: Lexicon, ps: PhoneSet) -> str:
    lines = []
    for word, prons in lex.entries.items():
        for pron in prons:
            lines.append(f"{word}\t{' '.join(ps.label(p) for p in pron)}\n")
    return "".join(lines)


@dataclass(frozen=True)
class Arc:
    src: int
    dst: int
    word: str
    score: float


@dataclass(frozen=True)
class WordLattice:
    """Acyclic word graph. Node 0 is the start; scores are natural-log probabilities."""

    arcs: tuple
    finals: frozenset
    start: int = 0

    def __post_init__(self):
        arcs = tuple(self.arcs)
        object.__setattr__(self, "arcs", arcs)
        object.__setattr__(self, "finals", frozenset(self.finals))
        object.__setattr__(self, "_order", _validate_lattice(arcs, self.finals, self.start))

    @property
    def nodes(self) -> tuple:
        return self._order

    def topological_order(self) -> tuple:
        return self._order

    def out_arcs(self) -> dict:
        out = {n: [] for n in self._order}
        for a in self.arcs:
            out[a.src].append(a)
        return out

    def paths(self, limit=None):
        """Enumerate (words, score) for every start-to-final path; epsilons dropped."""
        out = self.out_arcs()
        result = []
        stack = [(self.start, (), 0.0)]
        while stack:
            node, words, score = stack.pop()
            if node in self.finals:
                result.append((words, score))
                if limit is not None and len(result) > limit:
                    raise ValueError(f"lattice has more than {limit} paths")
            for a in out[node]:
                w = words if a.word == EPS_WORD else words + (a.word,)
                stack.append((a.dst, w, score + a.score))
        return result

    def best_path(self):
        """Highest-scoring start-to-final path as (words, score)."""
        best = {self.start: (0.0, ())}
        out = self.out_arcs()
        for n in self._order:
            if n not in best:
                continue
            s, words = best[n]
            for a in out[n]:
                cand = s + a.score
                if a.dst not in best or cand > best[a.dst][0]:
                    w = words if a.word == EPS_WORD else words + (a.word,)
                    best[a.dst] = (cand, w)
        finals = [(best[f][0], best[f][1]) for f in self.finals if f in best]
        score, words = max(finals, key=lambda x: x[0])
        return words, score


def _validate_lattice(arcs, finals, start):
    if not finals:
        raise NoFinalNodeError("lattice has no final node")
    nodes = {start} | set(finals)
    succ, pred = {}, {}
    for a in arcs:
        if not np.isfinite(a.score):
            raise FormatError(f"arc {a.src}->{a.dst} has non-finite score")
        nodes.update((a.src, a.dst))
        succ.setdefault(a.src, []).append(a.dst)
        pred.setdefault(a.dst, []).append(a.src)
    indeg = {n: 0 for n in nodes}
    for a in arcs:
        indeg[a.dst] += 1
    queue = deque(sorted(n for n in nodes if indeg[n] == 0))
    order = []
    while queue:
        n = queue.popleft()
        order.append(n)
        for m in succ.get(n, ()):
            indeg[m] -= 1
            if indeg[m] == 0:
                queue.append(m)
    if len(order) != len(nodes):
        raise CycleDetectedError("lattice contains a cycle")
    fwd = _reach(start, succ)
    bwd = set()
    for f in finals:
        bwd |= _reach(f, pred)
    for a in arcs:
        if a.src not in fwd or a.dst not in bwd:
            raise UnreachableArcError(f"arc {a.src}->{a.dst} {a.word!r} is not on a start-final path")
    if not (fwd & set(finals)):
        raise NoFinalNodeError("no final node is reachable from the start")
    # every arc is start-reachable, so start has no in-arcs and leads the order
    return tuple(n for n in order if n in fwd)


def _reach(src, adj):
    seen = {src}
    stack = [src]
    while stack:
        n = stack.pop()
        for m in adj.get(n, ()):
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return seen


def parse_lattice(text: str) -> WordLattice:
    arcs, finals = [], set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if parts[0] == "final":
            if len(parts) != 2:
                raise FormatError("expected 'final<TAB>node'", line=lineno)
            try:
                finals.add(int(parts[1]))
            except ValueError:
                raise FormatError(f"bad final node {parts[1]!r}", line=lineno) from None
            continue
        if len(parts) != 4:
            raise FormatError("expected 'from<TAB>to<TAB>word<TAB>score'", line=lineno)
        try:
            src, dst = int(parts[0]), int(parts[1])
            score = float(parts[3])
        except ValueError:
            raise FormatError("non-numeric node or score field", line=lineno) from None
        if not parts[2]:
            raise FormatError("empty word field", line=lineno)
        arcs.append(Arc(src, dst, parts[2], score))
    return WordLattice(tuple(arcs), frozenset(finals))


def format_lattice(lat: WordLattice) -> str:
    lines = [f"{a.src}\t{a.dst}\t{a.word}\t{a.score!r}\n" for a in lat.arcs]
    lines += [f"final\t{f}\n" for f in sorted(lat.finals)]
    return "".join(lines)


LABELS = ("correct", "erroneous")


@dataclass(frozen=True)
class LabeledScore:
    utt_id: str
    score: float
    label: str | None = None

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise FormatError(f"{self.utt_id}: score is not finite")
        if self.label is not None and self.label not in LABELS:
            raise FormatError(f"{self.utt_id}: unknown label {self.label!r}")


def format_scores(scores: Sequence[LabeledScore]) -> str:
    lines = []
    for s in sorted(scores, key=lambda s: s.utt_id):
        row = f"{s.utt_id}\t{s.score:.6f}"
        if s.label is not None:
            row += f"\t{s.label}"
        lines.append(row + "\n")
    return "".join(lines)


def parse_scores(text: str) -> list:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) not in (2, 3):
            raise FormatError("expected 'utt_id<TAB>score[<TAB>label]'", line=lineno)
        try:
            score = float(parts[1])
        except ValueError:
            raise FormatError(f"bad score {parts[1]!r}", line=lineno) from None
        label = parts[2] if len(parts) == 3 else None
        try:
            out.append(LabeledScore(parts[0], score, label))
        except FormatError as e:
            raise FormatError(str(e), line=lineno) from None
    return out

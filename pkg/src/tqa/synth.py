"""Seeded synthetic corpora with known transcription errors.

A corpus is a lexicon over a generic phone set, true transcripts drawn
from a Zipf word distribution, true alignments with random phone
durations, noisy classifier posteriorgrams, and observed transcripts
corrupted by insertions, deletions and substitutions. The observed
alignment is a forced alignment of the observed phone sequence against
the true frame labels, so a wrong transcript gets stretched over the
audio the way a real aligner would stretch it.

Every random draw comes from ``SeedSequence(seed, spawn_key=(stream, i))``
so any single utterance can be regenerated on its own, in any order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .core_io import (Alignment, FormatError, Lexicon, PhoneSet, Posteriorgram, Transcript,
                      format_alignment, format_lexicon, format_phoneset, format_transcripts,
                      parse_alignment, parse_lexicon, parse_phoneset, parse_transcripts,
                      read_posteriorgram, write_posteriorgram)
from .evaluation import EditBreakdown

# seed streams
_LEXICON, _WORDS, _POSTERIOR, _CORRUPT, _TRAIN = range(5)


def _rng(seed, stream, i=0):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, i)))


def _range(name, r):
    lo, hi = (int(r[0]), int(r[1]))
    if lo < 1 or hi < lo:
        raise ValueError(f"{name} must be a non-empty positive range, got {r}")
    return lo, hi


@dataclass(frozen=True)
class CorpusConfig:
    num_utterances: int = 2000
    words_per_utterance: tuple = (8, 12)
    lexicon_size: int = 1000
    phones_per_word: tuple = (2, 4)
    frames_per_phone: tuple = (3, 20)
    K: int = 40
    seed: int = 0
    zipf_exponent: float = 1.0
    homophones: int = 0  # extra words sharing an existing pronunciation
    train_sentences: int = 5000

    def __post_init__(self):
        for name in ("words_per_utterance", "phones_per_word", "frames_per_phone"):
            object.__setattr__(self, name, _range(name, getattr(self, name)))
        if self.num_utterances < 1 or self.lexicon_size < 2 or self.K < 1:
            raise ValueError("need num_utterances >= 1, lexicon_size >= 2, K >= 1")
        if self.homophones < 0 or self.train_sentences < 0:
            raise ValueError("homophones and train_sentences must be >= 0")


@dataclass(frozen=True)
class NoiseConfig:
    """Classifier imperfection.

    ``alpha`` is the mass each frame keeps on the phone the classifier
    "heard"; the rest goes to the heard phone's confusable neighbours
    (``spread="neighbors"``, phones at index offsets +1, -1, +2) or to all
    other phones (``spread="uniform"``), split by a symmetric Dirichlet
    with concentration ``confusion_spread``. By default the heard phone is
    the true one; ``segment_confusion`` makes a whole segment be heard as a
    confusable neighbour with that probability, a harder regime in which
    even the correct transcripts disagree with the classifier.
    ``duration_jitter`` moves every internal segment boundary by up to
    that many frames.
    """

    alpha: float = 0.85
    confusion_spread: float = 1.0
    spread: str = "neighbors"
    segment_confusion: float = 0.0
    duration_jitter: int = 0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.spread not in ("neighbors", "uniform"):
            raise ValueError("spread must be 'neighbors' or 'uniform'")
        if self.confusion_spread <= 0 or self.duration_jitter < 0:
            raise ValueError("confusion_spread must be > 0 and duration_jitter >= 0")
        if not 0 <= self.segment_confusion <= 1:
            raise ValueError("segment_confusion must lie in [0, 1]")


@dataclass(frozen=True)
class ErrorRates:
    """Per-word error probabilities.

    With ``sentence_error_rate`` unset every word is edited independently.
    When set, that fraction of sentences is marked erroneous and edits are
    concentrated in them (at least one each) so the per-word rates still
    hold on average.
    """

    insertion: float = 0.0
    deletion: float = 0.0
    substitution: float = 0.0
    sentence_error_rate: float | None = None

    def __post_init__(self):
        for r in (self.insertion, self.deletion, self.substitution):
            if not 0 <= r < 1:
                raise ValueError("each rate must lie in [0, 1)")
        if self.total >= 1:
            raise ValueError("insertion + deletion + substitution must be < 1")
        if self.sentence_error_rate is not None and not 0 < self.sentence_error_rate <= 1:
            raise ValueError("sentence_error_rate must lie in (0, 1]")

    @property
    def total(self):
        return self.insertion + self.deletion + self.substitution


# error distribution of the reference evaluation set
FIG2_RATES = ErrorRates(0.0101, 0.0069, 0.0242, sentence_error_rate=0.152)
NO_ERRORS = ErrorRates()


def make_phoneset(K: int) -> PhoneSet:
    width = max(2, len(str(K - 1)))
    return PhoneSet(tuple(f"p{i:0{width}d}" for i in range(K)))


def _word_name(i, n):
    return f"w{i:0{max(4, len(str(n - 1)))}d}"


def gen_lexicon(cfg: CorpusConfig) -> Lexicon:
    lo, hi = cfg.phones_per_word
    distinct = sum(cfg.K ** L for L in range(lo, hi + 1))
    if cfg.lexicon_size > distinct:
        raise ValueError(
            f"lexicon_size {cfg.lexicon_size} exceeds the {distinct} distinct pronunciations available")
    rng = _rng(cfg.seed, _LEXICON)
    seen = set()
    prons = []
    while len(prons) < cfg.lexicon_size:
        L = int(rng.integers(lo, hi + 1))
        pron = tuple(int(p) for p in rng.integers(0, cfg.K, size=L))
        if pron not in seen:
            seen.add(pron)
            prons.append(pron)
    for _ in range(cfg.homophones):
        prons.append(prons[int(rng.integers(0, cfg.lexicon_size))])
    n = len(prons)
    return Lexicon({_word_name(i, n): [p] for i, p in enumerate(prons)})


def _zipf(n, s):
    w = 1.0 / np.arange(1, n + 1) ** s
    return w / w.sum()


def _draw_sentence(rng, cfg, words, probs):
    n = int(rng.integers(cfg.words_per_utterance[0], cfg.words_per_utterance[1] + 1))
    return tuple(words[i] for i in rng.choice(len(words), size=n, p=probs))


def _align_words(rng, utt_id, words, lex, frames_per_phone):
    segs = []
    lo, hi = frames_per_phone
    for w in words:
        for p in lex[w][0]:
            segs.append((p, int(rng.integers(lo, hi + 1))))
    return Alignment(utt_id, tuple(segs))


@dataclass
class SynthCorpus:
    phoneset: PhoneSet
    lexicon: Lexicon
    transcripts: list
    alignments: list
    config: CorpusConfig

    def __len__(self):
        return len(self.transcripts)


def utt_id(i, n):
    return f"utt{i:0{max(5, len(str(n - 1)))}d}"


def gen_corpus(cfg: CorpusConfig = CorpusConfig()) -> SynthCorpus:
    """Lexicon plus true transcripts and alignments (no posteriors)."""
    lex = gen_lexicon(cfg)
    words = lex.words
    probs = _zipf(len(words), cfg.zipf_exponent)
    transcripts, alignments = [], []
    for i in range(cfg.num_utterances):
        rng = _rng(cfg.seed, _WORDS, i)
        uid = utt_id(i, cfg.num_utterances)
        ws = _draw_sentence(rng, cfg, words, probs)
        transcripts.append(Transcript(uid, ws))
        alignments.append(_align_words(rng, uid, ws, lex, cfg.frames_per_phone))
    return SynthCorpus(make_phoneset(cfg.K), lex, transcripts, alignments, cfg)


def gen_training_text(cfg: CorpusConfig, lex: Lexicon, n=None) -> list:
    """Sentences from the same word distribution, for background/general LMs."""
    n = cfg.train_sentences if n is None else n
    words = lex.words
    probs = _zipf(len(words), cfg.zipf_exponent)
    rng = _rng(cfg.seed, _TRAIN)
    return [_draw_sentence(rng, cfg, words, probs) for _ in range(n)]


def confusable(k, K, spread="neighbors"):
    if spread == "uniform":
        return [j for j in range(K) if j != k]
    out = []
    for off in (1, -1, 2):
        j = (k + off) % K
        if j != k and j not in out:
            out.append(j)
    return out


def _jitter(durs, j, rng):
    if j == 0 or len(durs) < 2:
        return durs
    bounds = np.cumsum(durs)[:-1]
    bounds = bounds + rng.integers(-j, j + 1, size=bounds.size)
    T = int(np.sum(durs))
    # keep boundaries strictly increasing inside (0, T)
    for i in range(bounds.size):
        lo = (bounds[i - 1] + 1) if i else 1
        hi = T - (bounds.size - i)
        bounds[i] = min(max(bounds[i], lo), hi)
    return np.diff(np.concatenate([[0], bounds, [T]]))


def gen_posteriors(a: Alignment, noise: NoiseConfig, K: int, seed=0, rng=None) -> Posteriorgram:
    """Noisy classifier output for a true alignment."""
    if rng is None:
        rng = np.random.default_rng(seed)
    heard = []
    for p, _ in a.segments:
        if noise.segment_confusion > 0 and rng.random() < noise.segment_confusion:
            alts = confusable(p, K, "neighbors")
            heard.append(alts[int(rng.integers(len(alts)))] if alts else p)
        else:
            heard.append(p)
    durs = _jitter(np.array([d for _, d in a.segments]), noise.duration_jitter, rng)
    labels = np.repeat(np.array(heard, dtype=np.int64), durs)
    T = labels.size
    values = np.zeros((T, K))
    values[np.arange(T), labels] = noise.alpha
    rest = 1.0 - noise.alpha
    if rest > 0:
        if noise.spread == "uniform":
            m = K - 1
        else:
            m = len(confusable(0, K))
        if m == 0:
            values[np.arange(T), labels] = 1.0
        else:
            mass = rng.dirichlet(np.full(m, noise.confusion_spread), size=T) * rest
            if noise.spread == "uniform":
                cols = (labels[:, None] + np.arange(1, K)[None, :]) % K
            else:
                offs = np.array([o for o in (1, -1, 2)][:m])
                cols = (labels[:, None] + offs[None, :]) % K
            np.add.at(values, (np.repeat(np.arange(T), m), cols.reshape(-1)), mass.reshape(-1))
    return Posteriorgram(values)


def _edit_prob_within(n, target):
    """Per-word edit probability q with q / (1 - (1-q)^n) == target."""
    if target <= 1.0 / n:
        return None  # exactly one edit
    if target >= 1.0:
        return 1.0
    lo, hi = 1e-12, 1.0
    for _ in range(100):
        mid = (lo + hi) / 2
        if mid / (1 - (1 - mid) ** n) < target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def _draw_edit_plan(n, rates: ErrorRates, rng):
    """List of per-word actions: None, 'ins', 'del' or 'sub'."""
    kinds = ("ins", "del", "sub")
    p = np.array([rates.insertion, rates.deletion, rates.substitution])
    total = p.sum()
    if total == 0 or n == 0:
        return [None] * n
    if rates.sentence_error_rate is None:
        u = rng.random(n)
        cum = np.cumsum(p)
        return [kinds[int(np.searchsorted(cum, x, side="right"))] if x < total else None for x in u]
    S = rates.sentence_error_rate
    if rng.random() >= S:
        return [None] * n
    split = p / total
    q = _edit_prob_within(n, total / S)
    if q is None:
        plan = [None] * n
        plan[int(rng.integers(n))] = kinds[int(rng.choice(3, p=split))]
        return plan
    while True:
        hit = rng.random(n) < q
        if hit.any():
            break
    return [kinds[int(rng.choice(3, p=split))] if h else None for h in hit]


def corrupt_transcript(t: Transcript, rates: ErrorRates, lex: Lexicon, seed=0, rng=None):
    """Apply random edits to a true transcript.

    Returns ``(observed, label, breakdown)``; the breakdown counts edits
    relative to the true transcript (insertion = extra observed word).
    A deletion that would empty the transcript is skipped.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    words = lex.words
    plan = _draw_edit_plan(len(t.words), rates, rng)
    out = []
    n_ins = n_del = n_sub = 0
    n_ins_pending = 0
    for w, act in zip(t.words, plan):
        if act == "sub":
            j = int(rng.integers(len(words) - 1))
            alt = words[j] if words[j] != w else words[-1]
            out.append(alt)
            n_sub += 1
        elif act == "del":
            out.append(None)
            n_del += 1
        else:
            out.append(w)
            if act == "ins":
                n_ins_pending += 1
    if n_del and all(w is None for w in out):
        # keep the first deleted word
        out[0] = t.words[0]
        n_del -= 1
    out = [w for w in out if w is not None]
    for _ in range(n_ins_pending):
        pos = int(rng.integers(len(out) + 1))
        out.insert(pos, words[int(rng.integers(len(words)))])
        n_ins += 1
    breakdown = EditBreakdown(n_ins, n_del, n_sub, len(t.words) - n_del - n_sub)
    label = "erroneous" if breakdown.edits else "correct"
    return Transcript(t.utt_id, tuple(out)), label, breakdown


@numba.njit(cache=True)
def _align_dp(labels, phones, D):
    T = labels.size
    P = phones.size
    INF = 1 << 40
    cost = np.full((P, D), INF, dtype=np.int64)
    back = np.zeros((T, P, D), dtype=np.int8)  # 1 = came from previous phone
    cost[0, 0] = 1 if labels[0] != phones[0] else 0
    for t in range(1, T):
        new = np.full((P, D), INF, dtype=np.int64)
        for j in range(P):
            mis = 1 if labels[t] != phones[j] else 0
            for d in range(D):
                if d == 0:
                    best = INF
                    src = 0
                    if j > 0 and cost[j - 1, D - 1] < best:
                        best = cost[j - 1, D - 1]
                        src = 1
                    if D == 1 and cost[j, 0] <= best:
                        best = cost[j, 0]
                        src = 0
                elif d < D - 1:
                    best = cost[j, d - 1]
                    src = 2
                else:
                    best = cost[j, d]
                    src = 3
                    if cost[j, d - 1] < best:
                        best = cost[j, d - 1]
                        src = 2
                if best < INF:
                    new[j, d] = best + mis
                    back[t, j, d] = src
        cost = new
    # trace back from the last phone having served its minimum duration
    pos = np.empty(T, dtype=np.int64)
    j = P - 1
    d = D - 1
    total = cost[j, d]
    for t in range(T - 1, -1, -1):
        pos[t] = j
        if t == 0:
            break
        src = back[t, j, d]
        if src == 1:
            j -= 1
            d = D - 1
        elif src == 2:
            d -= 1
        # src 0 (D == 1 stay) and 3 (capped stay) keep (j, d)
    return pos, total


def force_align(utt_id: str, phones, frame_labels, min_duration=3) -> Alignment:
    """Fit a phone sequence to frames, minimising frames whose true label differs.

    Each phone gets at least ``min_duration`` frames when the utterance is
    long enough, otherwise as many as fit evenly.
    """
    phones = np.asarray(phones, dtype=np.int64)
    labels = np.asarray(frame_labels, dtype=np.int64)
    T, P = labels.size, phones.size
    if P == 0 or P > T:
        raise ValueError(f"{utt_id}: cannot align {P} phones to {T} frames")
    D = max(1, min(min_duration, T // P))
    pos, _ = _align_dp(labels, phones, D)
    durs = np.bincount(pos, minlength=P)
    return Alignment(utt_id, tuple((int(p), int(d)) for p, d in zip(phones, durs)))


def pronounce(words, lex: Lexicon):
    return [p for w in words for p in lex[w][0]]


@dataclass
class SynthUtterance:
    utt_id: str
    true: Transcript
    observed: Transcript
    align_true: Alignment
    align_observed: Alignment
    label: str
    breakdown: EditBreakdown
    posteriorgram: Posteriorgram | None = None


@dataclass
class SynthDataset:
    phoneset: PhoneSet
    lexicon: Lexicon
    utterances: list
    train_text: list
    corpus_config: CorpusConfig
    noise: NoiseConfig
    rates: ErrorRates

    def __len__(self):
        return len(self.utterances)


def make_utterance(i, corpus: SynthCorpus, noise: NoiseConfig, rates: ErrorRates,
                   with_posteriors=True) -> SynthUtterance:
    cfg = corpus.config
    t_true = corpus.transcripts[i]
    a_true = corpus.alignments[i]
    observed, label, bd = corrupt_transcript(t_true, rates, corpus.lexicon,
                                             rng=_rng(cfg.seed, _CORRUPT, i))
    if label == "correct":
        a_obs = a_true
    else:
        a_obs = force_align(t_true.utt_id, pronounce(observed.words, corpus.lexicon),
                            a_true.frame_labels(), min_duration=min(3, cfg.frames_per_phone[0]))
    post = None
    if with_posteriors:
        post = gen_posteriors(a_true, noise, cfg.K, rng=_rng(cfg.seed, _POSTERIOR, i))
    return SynthUtterance(t_true.utt_id, t_true, observed, a_true, a_obs, label, bd, post)


def gen_dataset(cfg: CorpusConfig = CorpusConfig(), noise: NoiseConfig = NoiseConfig(),
                rates: ErrorRates = FIG2_RATES, with_posteriors=True) -> SynthDataset:
    corpus = gen_corpus(cfg)
    utts = [make_utterance(i, corpus, noise, rates, with_posteriors) for i in range(len(corpus))]
    train = gen_training_text(cfg, corpus.lexicon)
    return SynthDataset(corpus.phoneset, corpus.lexicon, utts, train, cfg, noise, rates)


# on-disk layout of a corpus directory
PHONES, LEXICON, TEXT, TEXT_TRUE = "phones.txt", "lexicon.txt", "text", "text.true"
ALIGN, ALIGN_TRUE, TRAIN_TEXT = "align.txt", "align.true.txt", "train_text.txt"
MANIFEST, POST_DIR = "manifest.tsv", "post"


def format_edits(b: EditBreakdown) -> str:
    return f"ins={b.insertions},del={b.deletions},sub={b.substitutions}"


def parse_edits(text: str, ref_len=None) -> EditBreakdown:
    try:
        vals = dict(kv.split("=") for kv in text.split(","))
        ins, dels, subs = int(vals["ins"]), int(vals["del"]), int(vals["sub"])
    except (KeyError, ValueError):
        raise FormatError(f"bad edits field {text!r}") from None
    hits = 0 if ref_len is None else ref_len - dels - subs
    return EditBreakdown(ins, dels, subs, hits)


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def write_dataset(ds: SynthDataset, out_dir) -> list:
    """Write every corpus file under ``out_dir``; returns the paths written."""
    out = Path(out_dir)
    (out / POST_DIR).mkdir(parents=True, exist_ok=True)
    ps, utts = ds.phoneset, ds.utterances
    files = {
        PHONES: format_phoneset(ps),
        LEXICON: format_lexicon(ds.lexicon, ps),
        TEXT: format_transcripts(u.observed for u in utts),
        TEXT_TRUE: format_transcripts(u.true for u in utts),
        ALIGN: format_alignment((u.align_observed for u in utts), ps),
        ALIGN_TRUE: format_alignment((u.align_true for u in utts), ps),
        TRAIN_TEXT: "".join(" ".join(s) + "\n" for s in ds.train_text),
        MANIFEST: "".join(f"{u.utt_id}\t{u.label}\t{format_edits(u.breakdown)}\n" for u in utts),
    }
    written = []
    for name, text in files.items():
        _write(out / name, text)
        written.append(out / name)
    for u in utts:
        if u.posteriorgram is None:
            continue
        path = out / POST_DIR / f"{u.utt_id}.bin"
        path.write_bytes(write_posteriorgram(u.posteriorgram))
        written.append(path)
    return written


class CorpusDir:
    """Read access to a corpus directory; posteriorgrams load on demand."""

    def __init__(self, path):
        self.path = Path(path)
        if not (self.path / PHONES).is_file():
            raise FileNotFoundError(f"{self.path}: not a corpus directory (no {PHONES})")
        self.phoneset = parse_phoneset(self._read(PHONES))
        self.lexicon = parse_lexicon(self._read(LEXICON), self.phoneset)
        self.transcripts = {t.utt_id: t for t in parse_transcripts(self._read(TEXT))}
        self.utt_ids = sorted(self.transcripts)
        self.labels, self.breakdowns = {}, {}
        if (self.path / MANIFEST).is_file():
            for lineno, line in enumerate(self._read(MANIFEST).splitlines(), 1):
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise FormatError("expected 'utt_id<TAB>label<TAB>edits'", line=lineno)
                self.labels[parts[0]] = parts[1]
                self.breakdowns[parts[0]] = parts[2]
        self._align = None

    def _read(self, name):
        return (self.path / name).read_text(encoding="utf-8")

    @property
    def alignments(self) -> dict:
        if self._align is None:
            self._align = {a.utt_id: a for a in parse_alignment(self._read(ALIGN), self.phoneset)}
        return self._align

    def true_transcripts(self) -> dict:
        return {t.utt_id: t for t in parse_transcripts(self._read(TEXT_TRUE))}

    def train_text(self) -> list:
        return [tuple(line.split()) for line in self._read(TRAIN_TEXT).splitlines() if line.strip()]

    def posterior_path(self, utt_id):
        return self.path / POST_DIR / f"{utt_id}.bin"

    def posteriorgram(self, utt_id) -> Posteriorgram:
        return read_posteriorgram(self.posterior_path(utt_id).read_bytes())

    def edit_breakdowns(self) -> dict:
        true = self.true_transcripts()
        return {u: parse_edits(e, len(true[u].words)) for u, e in self.breakdowns.items()}

"""Word n-gram language models.

Models are stored the ARPA way: for every stored context a table of
explicit log-probabilities plus a backoff weight; anything not listed
backs off to the next shorter context. Interpolated Kneser-Ney has an
exact representation in that form, so training converts to it directly.
All log values in memory are natural logs; ARPA text uses log10.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

BOS, EOS, UNK = "<s>", "</s>", "<unk>"
# ARPA writes zero probabilities as log10 = -99
LOG_ZERO = -99.0 * math.log(10.0)
_LN10 = math.log(10.0)


@dataclass
class CountTable:
    """Raw n-gram counts of orders 1..order over boundary-padded sentences."""

    order: int
    counts: dict = field(default_factory=dict)  # length -> Counter of tuples

    def __post_init__(self):
        if not 1 <= self.order <= 4:
            raise ValueError(f"order must be in [1, 4], got {self.order}")
        for m in range(1, self.order + 1):
            self.counts.setdefault(m, Counter())

    def add_sentence(self, tokens: Sequence[str]):
        padded = (BOS,) + tuple(tokens) + (EOS,)
        for m in range(1, self.order + 1):
            c = self.counts[m]
            for i in range(len(padded) - m + 1):
                c[padded[i:i + m]] += 1
        return self

    def __getitem__(self, m):
        return self.counts[m]

    @property
    def num_tokens(self):
        """Number of real-word tokens (boundary markers excluded)."""
        return sum(c for g, c in self.counts[1].items() if g[0] not in (BOS, EOS))

    def __bool__(self):
        return bool(self.counts[1])


def count_ngrams(tokens: Sequence[str], order: int) -> CountTable:
    return CountTable(order).add_sentence(tokens)


def count_corpus(sentences: Iterable[Sequence[str]], order: int) -> CountTable:
    table = CountTable(order)
    for s in sentences:
        table.add_sentence(s)
    return table


class NGramModel:
    """Backoff n-gram model over a closed vocabulary with ``<unk>``."""

    def __init__(self, order, vocab, probs, bows=None):
        self.order = order
        self.vocab = tuple(vocab)
        self.word_id = {w: i for i, w in enumerate(self.vocab)}
        self.probs = probs  # context tuple -> {word: natural-log prob}
        self.bows = bows or {}  # context tuple -> natural-log backoff weight
        self.contexts = frozenset(probs) | frozenset(self.bows)
        self._rows = {}

    def __repr__(self):
        return f"NGramModel(order={self.order}, |V|={len(self.vocab)}, contexts={len(self.contexts)})"

    def _map(self, w):
        return w if w in self.word_id else UNK

    def _lp(self, h, w):
        bow = 0.0
        while True:
            table = self.probs.get(h)
            if table is not None and w in table:
                return table[w] + bow
            if not h:
                return None
            bow += self.bows.get(h, 0.0)
            h = h[1:]

    def logprob(self, context: Sequence[str], w: str) -> float:
        h = tuple(self._map(x) if x != BOS else x for x in context)[-(self.order - 1):] if self.order > 1 else ()
        lp = self._lp(h, self._map(w))
        if lp is None or lp <= LOG_ZERO:
            return LOG_ZERO
        return lp

    def prob(self, context, w) -> float:
        lp = self.logprob(context, w)
        return 0.0 if lp <= LOG_ZERO else math.exp(lp)

    def state(self, history: Sequence[str]) -> tuple:
        """Longest suffix of ``history`` that is a stored context.

        Future probabilities depend on the history only through this
        suffix, so it is a safe recombination key for search.
        """
        if self.order == 1:
            return ()
        h = tuple(history)[-(self.order - 1):]
        for i in range(len(h)):
            if h[i:] in self.contexts:
                return h[i:]
        return ()

    def row(self, state: tuple) -> np.ndarray:
        """Natural-log probabilities of every vocabulary word after ``state``."""
        r = self._rows.get(state)
        if r is not None:
            return r
        if not state:
            r = np.full(len(self.vocab), LOG_ZERO)
            for w, lp in self.probs.get((), {}).items():
                r[self.word_id[w]] = lp
        else:
            r = self.row(state[1:]) + self.bows.get(state, 0.0)
            for w, lp in self.probs.get(state, {}).items():
                r[self.word_id[w]] = lp
        r = np.maximum(r, LOG_ZERO)
        r.setflags(write=False)
        self._rows[state] = r
        return r

    def distribution(self, context: Sequence[str]) -> dict:
        """p(w | context) for every vocabulary word."""
        return {w: self.prob(context, w) for w in self.vocab}


def _adjusted_counts(table: CountTable):
    """Counts used at each level: raw at the top order and for <s>-initial
    n-grams (nothing can precede them), left-continuation counts otherwise."""
    n = table.order
    adjusted = {n: dict(table[n])}
    for m in range(n - 1, 0, -1):
        cont = Counter()
        for g in table[m + 1]:
            cont[g[1:]] += 1
        level = {}
        for g, c in table[m].items():
            if g[0] == BOS:
                level[g] = c
            else:
                level[g] = cont.get(g, 0)
        adjusted[m] = {g: c for g, c in level.items() if c > 0}
    # <s> is never predicted
    adjusted[1].pop((BOS,), None)
    return adjusted


def kn_discount(level_counts) -> float:
    """n1 / (n1 + 2 n2) over a level's counts, falling back to 0.5."""
    freq = Counter(level_counts.values())
    n1, n2 = freq.get(1, 0), freq.get(2, 0)
    if n1 == 0 or n2 == 0:
        return 0.5
    return n1 / (n1 + 2 * n2)


def train_kn(counts: CountTable, discount=None, vocab: Iterable[str] = ()) -> NGramModel:
    """Interpolated, unmodified Kneser-Ney (one discount per order).

    The unigram level interpolates with a uniform distribution over the
    vocabulary (training words, ``</s>``, ``<unk>`` and any extra
    ``vocab``), so every word gets non-zero probability.
    """
    if not counts:
        raise ValueError("cannot train on empty counts")
    if discount is not None and not 0 < discount < 1:
        raise ValueError(f"discount must lie in (0, 1), got {discount}")
    n = counts.order
    adjusted = _adjusted_counts(counts)
    words = {g[0] for g in counts[1]} | {EOS, UNK} | set(vocab)
    words.discard(BOS)
    V = tuple(sorted(words))
    probs, bows = {}, {}

    # unigrams
    uni = adjusted[1]
    D = discount if discount is not None else kn_discount(uni)
    total = sum(uni.values())
    seen = sum(1 for c in uni.values() if c > 0)
    floor = D * seen / total / len(V)
    probs[()] = {w: math.log(max(uni.get((w,), 0) - D, 0.0) / total + floor) for w in V}
    model = NGramModel(1, V, probs, bows)

    for m in range(2, n + 1):
        level = adjusted[m]
        D = discount if discount is not None else kn_discount(level)
        by_ctx = defaultdict(dict)
        for g, c in level.items():
            by_ctx[g[:-1]][g[-1]] = c
        lower = model
        new_probs, new_bows = {}, {}
        for h, nxt in by_ctx.items():
            total = sum(nxt.values())
            gamma = D * len(nxt) / total
            table = {}
            for w, c in nxt.items():
                table[w] = math.log((c - D) / total + gamma * lower.prob(h[1:], w))
            new_probs[h] = table
            new_bows[h] = math.log(gamma)
        probs = {**probs, **new_probs}
        bows = {**bows, **new_bows}
        model = NGramModel(m, V, probs, bows)
    return model


def top_frequent_unigram(corpus: Iterable, n: int = 100) -> NGramModel:
    """Maximum-likelihood unigram over the ``n`` most frequent words.

    Ties are broken lexicographically; ``<unk>`` carries the mass of all
    other words. ``corpus`` holds transcripts or plain token sequences.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    freq = Counter()
    for t in corpus:
        freq.update(getattr(t, "words", t))
    total = sum(freq.values())
    if total == 0:
        raise ValueError("corpus is empty")
    top = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))[:n]
    probs = {w: math.log(c / total) for w, c in top}
    rest = total - sum(c for _, c in top)
    if rest > 0:
        probs[UNK] = math.log(rest / total)
    vocab = sorted(probs) if UNK in probs else sorted(probs) + [UNK]
    return NGramModel(1, vocab, {(): probs})


def interpolate(models: Sequence[NGramModel], weights: Sequence[float]) -> NGramModel:
    """Probability-level linear interpolation, stored densely per context.

    A component contributes zero for words outside its own vocabulary
    (``<unk>`` excepted), so the mixture is normalised over the union.
    Contexts are the union of the components' stored contexts; every
    word is listed under every context, so no backoff weights are needed.
    """
    if len(models) != len(weights) or not models:
        raise ValueError("need one weight per model")
    if abs(sum(weights) - 1.0) > 1e-12 or any(w < 0 for w in weights):
        raise ValueError("weights must be non-negative and sum to 1")
    vocab = sorted(set().union(*(m.vocab for m in models)))
    order = max(m.order for m in models)
    contexts = set().union(*(m.contexts for m in models)) | {()}
    # column maps from each component vocabulary into the union
    cols = [np.array([vocab.index(w) for w in m.vocab]) for m in models]
    probs, rows = {}, {}
    for h in sorted(contexts, key=lambda c: (len(c), c)):
        mix = np.zeros(len(vocab))
        for m, lam, col in zip(models, weights, cols):
            r = m.row(m.state(h))
            mix[col] += lam * np.where(r <= LOG_ZERO, 0.0, np.exp(r))
        with np.errstate(divide="ignore"):
            lp = np.maximum(np.log(mix), LOG_ZERO)
        probs[h] = dict(zip(vocab, lp.tolist()))
        lp.setflags(write=False)
        rows[h] = lp
    out = NGramModel(order, vocab, probs)
    out._rows.update(rows)
    return out


def build_biased_lm(t, background: NGramModel, lam: float = 0.9, order: int = 4,
                    discount=None) -> NGramModel:
    """Per-utterance LM: ``lam * KN(order) on the transcript + (1 - lam) * background``."""
    words = tuple(getattr(t, "words", t))
    if not words:
        raise ValueError("cannot build a biased LM from an empty transcript")
    if not 0 < lam < 1:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    utt = train_kn(count_ngrams(words, order), discount, vocab=background.vocab)
    return interpolate([utt, background], [lam, 1.0 - lam])


def sentence_logprob(model: NGramModel, words: Sequence[str], eos=True) -> float:
    history = [BOS]
    total = 0.0
    for w in list(words) + ([EOS] if eos else []):
        total += model.logprob(history, w)
        history.append(w)
    return total


def perplexity(model: NGramModel, sentences: Iterable[Sequence[str]]) -> float:
    lp, n = 0.0, 0
    for s in sentences:
        lp += sentence_logprob(model, s)
        n += len(s) + 1
    return math.exp(-lp / n)


def _fmt(x):
    return f"{x:.12g}"


def write_arpa(model: NGramModel) -> str:
    entries = defaultdict(list)
    for h, table in model.probs.items():
        for w, lp in table.items():
            entries[len(h) + 1].append((h + (w,), lp))
    if (BOS,) in model.contexts and model.order > 1:
        entries[1].append(((BOS,), LOG_ZERO))
    lines = ["", "\\data\\"]
    for m in range(1, model.order + 1):
        lines.append(f"ngram {m}={len(entries[m])}")
    for m in range(1, model.order + 1):
        lines += ["", f"\\{m}-grams:"]
        for g, lp in sorted(entries[m]):
            lp10 = max(lp, LOG_ZERO) / _LN10
            row = f"{_fmt(lp10)}\t{' '.join(g)}"
            if m < model.order and g in model.bows:
                row += f"\t{_fmt(model.bows[g] / _LN10)}"
            lines.append(row)
    lines += ["", "\\end\\", ""]
    return "\n".join(lines)


def read_arpa(text: str) -> NGramModel:
    probs, bows = defaultdict(dict), {}
    order = 0
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line == "\\data\\" or line.startswith("ngram "):
            if line.startswith("ngram "):
                order = max(order, int(line[6:].split("=")[0]))
            continue
        if line == "\\end\\":
            break
        if line.startswith("\\") and line.endswith("-grams:"):
            section = int(line[1:line.index("-")])
            continue
        if section is None:
            raise ValueError(f"line {lineno}: n-gram entry outside a section")
        parts = line.split("\t") if "\t" in line else line.split()
        if "\t" in line:
            lp10, gram = float(parts[0]), tuple(parts[1].split())
            bow10 = float(parts[2]) if len(parts) > 2 else None
        else:
            lp10, gram = float(parts[0]), tuple(parts[1:1 + section])
            bow10 = float(parts[1 + section]) if len(parts) > 1 + section else None
        if len(gram) != section:
            raise ValueError(f"line {lineno}: expected a {section}-gram")
        if gram != (BOS,):
            probs[gram[:-1]][gram[-1]] = lp10 * _LN10
        if bow10 is not None:
            bows[gram] = bow10 * _LN10
    vocab = sorted(probs.get((), {}))
    if UNK not in vocab:
        vocab.append(UNK)
    return NGramModel(order, vocab, dict(probs), bows)

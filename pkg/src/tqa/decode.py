"""Lexicon-tree token-passing decoder and lattice oracle WER.

The decoder is a stand-in for a full hybrid ASR system: acoustic scores
are the log phone posteriors themselves (one flat state per phone, any
number of frames), words come from a prefix tree over the lexicon, and
the n-gram LM is applied at word ends. Word-end events become lattice
arcs; lattice nodes are keyed by (frame boundary, LM state) so the
result is acyclic by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_io import EPS_WORD, Arc, Lexicon, Posteriorgram, WordLattice
from .kl_detect import DEFAULT_FLOOR
from .lm import BOS, EOS, UNK, NGramModel


class DecodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecodeConfig:
    beam: float = 10.0
    max_active: int = 500
    lm_weight: float = 1.0
    word_insertion_penalty: float = 0.0

    def __post_init__(self):
        if not self.beam > 0:
            raise ValueError("beam must be > 0")
        if self.max_active < 1:
            raise ValueError("max_active must be >= 1")


class LexiconTree:
    """Prefix tree over pronunciations. Node 0 is the root and has no phone."""

    def __init__(self, lex: Lexicon, word_ids: dict):
        phone = [-1]
        children = [{}]
        ends = [[]]
        for word, prons in lex.entries.items():
            wid = word_ids.get(word)
            if wid is None:
                continue
            for pron in prons:
                n = 0
                for p in pron:
                    nxt = children[n].get(p)
                    if nxt is None:
                        nxt = len(phone)
                        phone.append(p)
                        children.append({})
                        ends.append([])
                        children[n][p] = nxt
                    n = nxt
                if wid not in ends[n]:
                    ends[n].append(wid)
        self.phone = np.array(phone, dtype=np.int64)
        self.num_nodes = len(phone)
        ptr = [0]
        idx = []
        for ch in children:
            idx += [ch[p] for p in sorted(ch)]
            ptr.append(len(idx))
        self.child_ptr = np.array(ptr, dtype=np.int64)
        self.child_idx = np.array(idx, dtype=np.int64)
        self.root_children = self.child_idx[ptr[0]:ptr[1]]
        self.ends = [tuple(sorted(e)) for e in ends]
        self.has_end = np.array([bool(e) for e in ends])


def _expand(nodes, tree):
    """For each token node, (token index, successor node) over self-loop and children."""
    starts = tree.child_ptr[nodes]
    counts = tree.child_ptr[nodes + 1] - starts
    tok = np.repeat(np.arange(nodes.size), counts)
    offs = np.arange(tok.size) - np.repeat(np.cumsum(counts) - counts, counts)
    kids = tree.child_idx[starts[tok] + offs]
    return (np.concatenate([np.arange(nodes.size), tok]),
            np.concatenate([nodes, kids]))


def beam_decode(Q: Posteriorgram, lex: Lexicon, lm: NGramModel,
                cfg: DecodeConfig = DecodeConfig(), floor=DEFAULT_FLOOR) -> WordLattice:
    """Decode ``Q`` into a word lattice under ``lm``.

    Only lexicon words the LM can predict (its vocabulary minus the
    special tokens) are searched. Raises :class:`DecodeError` when no
    hypothesis reaches the last frame.
    """
    if len(lex) == 0:
        raise DecodeError("empty lexicon")
    lex.check(Q.K)
    vocab_ids = {w: i for i, w in enumerate(lm.vocab) if w not in (BOS, EOS, UNK)}
    tree = LexiconTree(lex, vocab_ids)
    if tree.root_children.size == 0:
        raise DecodeError("no lexicon word is in the LM vocabulary")
    words = lm.vocab
    e = np.log(np.maximum(Q.values, floor))
    T = Q.T
    lmw, wip, beam = cfg.lm_weight, cfg.word_insertion_penalty, cfg.beam

    states = [lm.state((BOS,))]
    state_id = {states[0]: 0}
    next_cache = {}

    def advance(sid, wid):
        key = (sid, wid)
        nxt = next_cache.get(key)
        if nxt is None:
            s = lm.state(states[sid] + (words[wid],))
            nxt = state_id.get(s)
            if nxt is None:
                nxt = state_id[s] = len(states)
                states.append(s)
            next_cache[key] = nxt
        return nxt

    # lattice nodes: boundary frame, score of best path into the node
    node_time = [0]
    node_score = [0.0]
    arcs = []
    entry_nodes = np.array([0])
    entry_state = np.array([0])

    tok_node = np.zeros(0, dtype=np.int64)
    tok_state = np.zeros(0, dtype=np.int64)
    tok_score = np.zeros(0)
    tok_bp = np.zeros(0, dtype=np.int64)
    root = tree.root_children

    for t in range(T):
        src, succ = _expand(tok_node, tree)
        c_node = [succ]
        c_state = [tok_state[src]]
        c_score = [tok_score[src]]
        c_bp = [tok_bp[src]]
        if entry_nodes.size:
            n_in = entry_nodes.size
            c_node.append(np.tile(root, n_in))
            c_state.append(np.repeat(entry_state, root.size))
            c_score.append(np.repeat(np.asarray(node_score)[entry_nodes], root.size))
            c_bp.append(np.repeat(entry_nodes, root.size))
        node = np.concatenate(c_node)
        state = np.concatenate(c_state)
        score = np.concatenate(c_score) + e[t, tree.phone[node]]
        bp = np.concatenate(c_bp)

        # recombine on (node, LM state), keep the best; earliest wins exact ties
        key = (node << 32) | state
        order = np.lexsort((bp, -score, key))
        key = key[order]
        first = np.ones(key.size, dtype=bool)
        first[1:] = key[1:] != key[:-1]
        sel = order[first]
        node, state, score, bp = node[sel], state[sel], score[sel], bp[sel]

        if t == T - 1:
            # only word-final tokens can finish, so measure the beam among them
            can_end = tree.has_end[node]
            if not can_end.any():
                raise DecodeError("no hypothesis ends a word at the last frame")
            node, state, score, bp = node[can_end], state[can_end], score[can_end], bp[can_end]
        best = score.max()
        keep = score >= best - beam
        if np.count_nonzero(keep) > cfg.max_active:
            keep_idx = np.flatnonzero(keep)
            top = keep_idx[np.argsort(-score[keep_idx], kind="stable")[:cfg.max_active]]
            keep = np.zeros(score.size, dtype=bool)
            keep[top] = True
        tok_node, tok_state, tok_score, tok_bp = node[keep], state[keep], score[keep], bp[keep]

        # word ends -> arcs into nodes at boundary t + 1
        ending = np.flatnonzero(tree.has_end[tok_node])
        new_nodes = {}
        for i in ending:
            sid = int(tok_state[i])
            row = lm.row(states[sid])
            base = float(tok_score[i])
            src_node = int(tok_bp[i])
            for wid in tree.ends[tok_node[i]]:
                total = base + lmw * float(row[wid]) + wip
                if total < best - beam:
                    continue
                nsid = advance(sid, wid)
                nid = new_nodes.get(nsid)
                if nid is None:
                    nid = new_nodes[nsid] = len(node_time)
                    node_time.append(t + 1)
                    node_score.append(total)
                elif total > node_score[nid]:
                    node_score[nid] = total
                arcs.append((src_node, nid, words[wid], total - node_score[src_node]))
        entry_nodes = np.array(sorted(new_nodes.values()), dtype=np.int64)
        entry_state = np.array([s for s, _ in sorted(new_nodes.items(), key=lambda kv: kv[1])],
                               dtype=np.int64)
        if tok_node.size == 0 and entry_nodes.size == 0:
            raise DecodeError(f"all hypotheses pruned at frame {t}")

    if entry_nodes.size == 0:
        raise DecodeError("no hypothesis ends a word at the last frame")
    final = len(node_time)
    node_time.append(T + 1)
    for nid, sid in zip(entry_nodes.tolist(), entry_state.tolist()):
        arcs.append((nid, final, EPS_WORD, lmw * lm.logprob(states[sid], EOS)))
    return _trim(arcs, final, node_time)


def _trim(arcs, final, node_time):
    into = {}
    for a in arcs:
        into.setdefault(a[1], []).append(a[0])
    live = {final}
    stack = [final]
    while stack:
        n = stack.pop()
        for m in into.get(n, ()):
            if m not in live:
                live.add(m)
                stack.append(m)
    kept = [a for a in arcs if a[1] in live]
    ids = sorted(live, key=lambda n: (node_time[n], n))
    remap = {n: i for i, n in enumerate(ids)}
    out = tuple(Arc(remap[s], remap[d], w, float(sc)) for s, d, w, sc in kept)
    return WordLattice(out, frozenset({remap[final]}))


@dataclass(frozen=True)
class OracleResult:
    edits: int
    ref_len: int

    @property
    def rate(self) -> float:
        """Edits over the reference length (an empty reference counts as length 1)."""
        return self.edits / max(self.ref_len, 1)

    @property
    def clamped_rate(self) -> float:
        return min(self.rate, 1.0)


def _close_deletions(c):
    # c[j] = min(c[j], c[j-1] + 1): consume reference words without an arc
    j = np.arange(c.size)
    return np.minimum.accumulate(c - j) + j


def oracle_wer(lat: WordLattice, ref) -> OracleResult:
    """Minimum word edit distance between ``ref`` and any lattice path.

    Epsilon arcs are free and consume no reference word.
    """
    ref_words = tuple(getattr(ref, "words", ref))
    R = len(ref_words)
    big = np.iinfo(np.int64).max // 4
    cost = {lat.start: np.arange(R + 1, dtype=np.int64)}
    out = lat.out_arcs()
    ref_arr = np.array(ref_words, dtype=object)
    for n in lat.topological_order():
        c = cost.get(n)
        if c is None:
            continue
        c = _close_deletions(c)
        cost[n] = c
        for a in out[n]:
            if a.word == EPS_WORD:
                cand = c
            else:
                cand = c + 1
                if R:
                    sub = c[:-1] + (ref_arr != a.word)
                    cand = cand.copy()
                    cand[1:] = np.minimum(cand[1:], sub)
            prev = cost.get(a.dst)
            cost[a.dst] = cand if prev is None else np.minimum(prev, cand)
    best = min(int(_close_deletions(cost[f])[R]) for f in lat.finals if f in cost)
    if best >= big:
        raise ValueError("lattice has no complete path")
    return OracleResult(best, R)

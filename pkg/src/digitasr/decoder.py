"""Time-synchronous Viterbi (token passing) over a compiled search graph."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid, EmptyObservation, NoSurvivingPath, SymbolOutOfRange
from .frontend import SymbolSequence
from .linguist import compile_transcript_graph

NEG_INF = -math.inf
EXACT_BEAM = 1e30


@dataclass(frozen=True)
class DecoderConfig:
    beam_width: float = EXACT_BEAM
    max_active: int | None = None
    word_insertion_penalty: float = 0.0

    def __post_init__(self):
        if not self.beam_width > 0:
            raise ConfigInvalid("beam_width must be > 0")
        if self.max_active is not None and self.max_active < 1:
            raise ConfigInvalid("max_active must be >= 1")


@dataclass(frozen=True)
class Hypothesis:
    words: tuple[str, ...]
    log_score: float
    state_alignment: tuple[int, ...] | None = None

    def format(self):
        return f"{self.log_score!r}\t{' '.join(self.words)}"


class _Compiled:
    """Array view of a search graph, cached per graph object."""

    def __init__(self, graph):
        n = graph.num_nodes
        self.emitting = np.array([nd.emitting for nd in graph.nodes], dtype=bool)
        self.emit_ids = np.flatnonzero(self.emitting)
        self.null_order = graph.null_order()
        self.word_end = {
            i: nd.word for i, nd in enumerate(graph.nodes)
            if not nd.emitting and nd.word is not None
        }
        preds = [[] for _ in range(n)]
        for s, d, lp in graph.arcs:
            preds[d].append((s, lp))
        for p in preds:
            p.sort()
        self.null_preds = {i: preds[i] for i in self.null_order}
        deg = max([len(preds[i]) for i in self.emit_ids] + [1])
        E = len(self.emit_ids)
        self.pred_src = np.zeros((E, deg), dtype=np.int64)
        self.pred_lp = np.full((E, deg), NEG_INF)
        for r, i in enumerate(self.emit_ids):
            for c, (s, lp) in enumerate(preds[i]):
                self.pred_src[r, c] = s
                self.pred_lp[r, c] = lp
        self.logB = graph.emission_logprob[self.emit_ids]


def _compiled(graph):
    cached = getattr(graph, "_compiled", None)
    if cached is None:
        cached = _Compiled(graph)
        graph._compiled = cached
    return cached


def _closure(cg, score, bp, penalty):
    """Relax non-emitting nodes in topological order within one frame."""
    for i in cg.null_order:
        best, arg = score[i], bp[i]
        bonus = penalty if i in cg.word_end else 0.0
        for s, lp in cg.null_preds[i]:
            v = score[s] + lp + bonus
            if v > best:
                best, arg = v, s
        score[i], bp[i] = best, arg


def _prune(score, ids, cfg):
    live = score[ids]
    finite = np.isfinite(live)
    if not finite.any():
        return
    best = live[finite].max()
    if cfg.beam_width < EXACT_BEAM:
        score[ids[live < best - cfg.beam_width]] = NEG_INF
    if cfg.max_active is not None and finite.sum() > cfg.max_active:
        live = score[ids]
        # Stable ordering: higher score first, then lower node id.
        order = np.lexsort((ids, -live))
        score[ids[order[cfg.max_active:]]] = NEG_INF


def decode(obs, graph, cfg=None):
    """Best word sequence for ``obs`` under ``graph``.

    With the default (infinite) beam this is exact max-path Viterbi. Ties
    are broken towards the lowest predecessor / final node id.
    """
    cfg = cfg or DecoderConfig()
    o = np.asarray(obs.symbols if isinstance(obs, SymbolSequence) else obs, dtype=np.int64)
    if o.size == 0:
        raise EmptyObservation("observation sequence is empty")
    K = graph.alphabet_size
    if (o < 0).any() or (o >= K).any():
        raise SymbolOutOfRange(f"symbols must lie in [0, {K})")
    cg = _compiled(graph)
    n, T = graph.num_nodes, o.size
    penalty = cfg.word_insertion_penalty

    score = np.full(n, NEG_INF)
    score[graph.start] = 0.0
    bp0 = np.full(n, -1, dtype=np.int64)
    _closure(cg, score, bp0, penalty)
    bps = np.full((T, n), -1, dtype=np.int64)
    for t in range(T):
        cand = score[cg.pred_src] + cg.pred_lp
        arg = cand.argmax(axis=1)
        rows = np.arange(len(cg.emit_ids))
        new = np.full(n, NEG_INF)
        new[cg.emit_ids] = cand[rows, arg] + cg.logB[:, o[t]]
        bps[t, cg.emit_ids] = cg.pred_src[rows, arg]
        _prune(new, cg.emit_ids, cfg)
        _closure(cg, new, bps[t], penalty)
        score = new
        if not np.isfinite(score).any():
            raise NoSurvivingPath(f"all tokens pruned at frame {t}")

    finals = sorted(graph.finals)
    best_final = max(finals, key=lambda f: (score[f], -f))
    if not math.isfinite(score[best_final]):
        raise NoSurvivingPath("no final node reachable at the last frame")

    words, align = [], []
    node, t = best_final, T - 1
    while not (t < 0 and node == graph.start):
        if node in cg.word_end:
            words.append(cg.word_end[node])
        if cg.emitting[node]:
            align.append(node)
            node = bps[t, node]
            t -= 1
        else:
            node = (bp0 if t < 0 else bps[t])[node]
        if node < 0:
            raise NoSurvivingPath("broken back-pointer chain")
    return Hypothesis(tuple(reversed(words)), float(score[best_final]), tuple(reversed(align)))


def align(obs, words, lexicon, model, silence=True):
    """Forced alignment of a fixed transcript; one graph node per frame."""
    graph = compile_transcript_graph(list(words), lexicon, model, silence=silence)
    return decode(obs, graph)

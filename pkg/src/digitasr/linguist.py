"""Phone inventory, pronunciation dictionary, digit grammar and search graphs.

The linguist turns a grammar plus a dictionary plus the phone HMMs of an
acoustic model into a flat :class:`SearchGraph` of emitting (HMM state) and
non-emitting (word boundary) nodes that the decoder walks frame by frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import GraphInvalid, ParseError, UnknownPhone, UnknownWord

SIL = "SIL"

VOWEL = "V"
CONSONANT = "C"
SILENCE = "S"

ALLOWED_SYLLABLES = ("CV", "CVC", "CVCC")

# Digits 1..9 then 0, the order of the dictionary file.
DIGITS = ("1", "2", "3", "4", "5", "6", "7", "8", "9", "0")
DIGIT_WORDS = dict(zip(DIGITS, (
    "WAHID", "ITHNAYN", "THALATHA", "ARBAA", "KHAMSA",
    "SITTA", "SABAA", "THAMANIYA", "TISAA", "SIFR",
)))


@dataclass(frozen=True)
class PhoneSet:
    phones: tuple[str, ...]
    classification: dict[str, str]
    vowel_length: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.phones)) != len(self.phones):
            raise ValueError("duplicate phone labels")
        for p in self.phones:
            if self.classification.get(p) not in (VOWEL, CONSONANT, SILENCE):
                raise ValueError(f"phone {p!r} is not classified")

    def __contains__(self, phone):
        return phone in self.classification

    def __len__(self):
        return len(self.phones)

    def is_vowel(self, phone):
        return self.classification.get(phone) == VOWEL

    @property
    def vowels(self):
        return tuple(p for p in self.phones if self.classification[p] == VOWEL)

    @property
    def consonants(self):
        return tuple(p for p in self.phones if self.classification[p] == CONSONANT)

    def subset(self, phones, with_silence=True):
        keep = [p for p in self.phones if p in set(phones)]
        missing = set(phones) - set(keep)
        if missing:
            raise UnknownPhone(sorted(missing)[0])
        cls = {p: self.classification[p] for p in keep}
        if with_silence:
            keep.append(SIL)
            cls[SIL] = SILENCE
        lengths = {p: l for p, l in self.vowel_length.items() if p in cls}
        return PhoneSet(tuple(keep), cls, lengths)


@dataclass(frozen=True)
class Lexicon:
    entries: dict[str, tuple[str, ...]]
    syllables: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for word, phones in self.entries.items():
            if not phones:
                raise ValueError(f"word {word!r} has an empty pronunciation")

    def __contains__(self, word):
        return word in self.entries

    def __len__(self):
        return len(self.entries)

    @property
    def words(self):
        return tuple(self.entries)

    def phones(self, word):
        try:
            return self.entries[word]
        except KeyError:
            raise UnknownWord(word) from None

    def phone_inventory(self):
        seen = {}
        for phones in self.entries.values():
            for p in phones:
                seen.setdefault(p, None)
        return tuple(seen)

    def transcript_phones(self, words, silence=True):
        """Phone string for a word sequence, optionally wrapped in SIL."""
        out = [SIL] if silence else []
        for w in words:
            out.extend(self.phones(w))
        if silence:
            out.append(SIL)
        return out


@dataclass(frozen=True)
class Grammar:
    kind: str
    vocabulary: tuple[str, ...]
    min_len: int | None = None
    max_len: int | None = None

    def __post_init__(self):
        if self.kind not in ("isolated_word", "word_loop"):
            raise ValueError(f"unknown grammar kind {self.kind!r}")
        if not self.vocabulary:
            raise ValueError("grammar vocabulary is empty")
        if self.min_len is not None and self.min_len < 1:
            raise ValueError("min_len must be >= 1")
        if self.max_len is not None and self.max_len < max(1, self.min_len or 1):
            raise ValueError("max_len must be >= min_len")


# --------------------------------------------------------------------------
# built-in digit task and file formats


def _data_text(name):
    return resources.files("digitasr").joinpath("data", name).read_text("utf-8")


def standard_arabic_phones():
    """The 34-phone Standard Arabic inventory (6 vowels, 28 consonants)."""
    return parse_phone_set(_data_text("standard_arabic.phones"))


def default_arabic_digits():
    """Built-in ten-digit task: returns ``(phone_set, lexicon)``.

    The phone set holds exactly the phones the digit words use, plus SIL.
    """
    lexicon = parse_dictionary(_data_text("arabic_digits.dict"))
    full = standard_arabic_phones()
    return full.subset(lexicon.phone_inventory()), lexicon


def parse_phone_set(text):
    phones, cls, lengths = [], {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) not in (2, 3) or cols[1] not in (VOWEL, CONSONANT, SILENCE):
            raise ParseError(f"bad phone-set line {raw!r}", lineno)
        phones.append(cols[0])
        cls[cols[0]] = cols[1]
        if len(cols) == 3:
            if cols[2] not in ("short", "long"):
                raise ParseError(f"bad vowel length {cols[2]!r}", lineno)
            lengths[cols[0]] = cols[2]
    try:
        return PhoneSet(tuple(phones), cls, lengths)
    except ValueError as e:
        raise ParseError(str(e)) from None


def format_phone_set(phone_set):
    lines = []
    for p in phone_set.phones:
        cols = [p, phone_set.classification[p]]
        if p in phone_set.vowel_length:
            cols.append(phone_set.vowel_length[p])
        lines.append("\t".join(cols))
    return "\n".join(lines) + "\n"


def parse_dictionary(text):
    """Parse ``WORD<TAB>PH PH ...[<TAB>CV-CVC]`` lines."""
    entries, syllables = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) not in (2, 3) or not cols[1].split():
            raise ParseError(f"bad dictionary line {raw!r}", lineno)
        word = cols[0].strip()
        if word in entries:
            raise ParseError(f"duplicate word {word!r}", lineno)
        entries[word] = tuple(cols[1].split())
        if len(cols) == 3 and cols[2].strip():
            syllables[word] = tuple(cols[2].strip().split("-"))
    if not entries:
        raise ParseError("dictionary has no entries")
    return Lexicon(entries, syllables)


def format_dictionary(lexicon):
    lines = []
    for word, phones in lexicon.entries.items():
        line = f"{word}\t{' '.join(phones)}"
        if word in lexicon.syllables:
            line += "\t" + "-".join(lexicon.syllables[word])
        lines.append(line)
    return "\n".join(lines) + "\n"


def load_dictionary(path):
    return parse_dictionary(Path(path).read_text("utf-8"))


def load_phone_set(path):
    return parse_phone_set(Path(path).read_text("utf-8"))


def parse_grammar(text):
    kv = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected KEY=value, got {raw!r}", lineno)
        key, value = line.split("=", 1)
        kv[key.strip().upper()] = value.strip()
    if "KIND" not in kv or "WORDS" not in kv:
        raise ParseError("grammar needs KIND= and WORDS= lines")
    try:
        return Grammar(
            kv["KIND"],
            tuple(kv["WORDS"].split()),
            int(kv["MIN"]) if "MIN" in kv else None,
            int(kv["MAX"]) if "MAX" in kv else None,
        )
    except ValueError as e:
        raise ParseError(str(e)) from None


def format_grammar(grammar):
    lines = [f"KIND={grammar.kind}", f"WORDS={' '.join(grammar.vocabulary)}"]
    if grammar.min_len is not None:
        lines.append(f"MIN={grammar.min_len}")
    if grammar.max_len is not None:
        lines.append(f"MAX={grammar.max_len}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# phonotactics


@dataclass(frozen=True)
class Violation:
    word: str
    kind: str
    detail: str = ""

    def __str__(self):
        s = f"{self.word}: {self.kind}"
        return f"{s} ({self.detail})" if self.detail else s


def syllabify(phones, phone_set):
    """Split a phone string into C/V syllable patterns.

    Every syllable is one onset consonant plus a vowel nucleus; consonants
    between two nuclei beyond the next onset become the coda of the earlier
    syllable. Material a single-consonant onset cannot absorb (a leading
    vowel, a vowel after a vowel) yields a pattern starting with ``V``.
    """
    cv = ["V" if phone_set.is_vowel(p) else "C" for p in phones]
    nuclei = [i for i, c in enumerate(cv) if c == "V"]
    if not nuclei:
        return ["".join(cv)] if cv else []
    starts = [v - 1 if v > 0 and cv[v - 1] == "C" else v for v in nuclei]
    bounds = starts + [len(cv)]
    patterns = ["".join(cv[bounds[k]:bounds[k + 1]]) for k in range(len(nuclei))]
    if starts[0] > 0:
        patterns[0] = "".join(cv[: starts[0]]) + patterns[0]
    return patterns


def validate_lexicon(lexicon, phone_set):
    """Collect phonotactic violations; an empty list means the lexicon is clean."""
    out = []
    for word, phones in lexicon.entries.items():
        unknown = [p for p in phones if p not in phone_set]
        for p in unknown:
            out.append(Violation(word, "unknown phone", p))
        if unknown:
            continue
        if phone_set.is_vowel(phones[0]):
            out.append(Violation(word, "vowel-initial word", phones[0]))
        for a, b in zip(phones, phones[1:]):
            if phone_set.is_vowel(a) and phone_set.is_vowel(b):
                out.append(Violation(word, "vowel adjacent to vowel", f"{a} {b}"))
        n_vowels = sum(phone_set.is_vowel(p) for p in phones)
        declared = lexicon.syllables.get(word)
        if declared is None:
            continue
        for pat in declared:
            if pat not in ALLOWED_SYLLABLES:
                out.append(Violation(
                    word, "pattern not in {CV, CVC, CVCC}", pat))
        if len(declared) != n_vowels:
            out.append(Violation(
                word, "syllable count != vowel count",
                f"{len(declared)} syllables, {n_vowels} vowels"))
        elif list(declared) != syllabify(phones, phone_set):
            out.append(Violation(
                word, "syllabification does not match phones",
                "-".join(syllabify(phones, phone_set))))
    return out


def syllable_count(word, lexicon, phone_set):
    return sum(phone_set.is_vowel(p) for p in lexicon.phones(word))


# --------------------------------------------------------------------------
# search graph


@dataclass(frozen=True)
class GraphNode:
    emitting: bool
    label: str
    word: str | None = None
    phone: str | None = None
    state: int | None = None


@dataclass
class SearchGraph:
    nodes: list[GraphNode]
    arcs: list[tuple[int, int, float]]
    start: int
    finals: tuple[int, ...]
    emission_logprob: np.ndarray  # (num_nodes, K); rows of non-emitting nodes are 0

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def alphabet_size(self):
        return self.emission_logprob.shape[1]

    def successors(self, n):
        return [(d, lp) for s, d, lp in self.arcs if s == n]

    def null_order(self):
        """Topological order of the non-emitting nodes over null-to-null arcs."""
        null = [i for i, n in enumerate(self.nodes) if not n.emitting]
        indeg = {i: 0 for i in null}
        out = {i: [] for i in null}
        for s, d, _ in self.arcs:
            if s in indeg and d in indeg:
                indeg[d] += 1
                out[s].append(d)
        ready = sorted(i for i in null if indeg[i] == 0)
        order = []
        while ready:
            i = ready.pop(0)
            order.append(i)
            for d in out[i]:
                indeg[d] -= 1
                if indeg[d] == 0:
                    ready.append(d)
            ready.sort()
        if len(order) != len(null):
            raise GraphInvalid("non-emitting cycle in search graph")
        return order

    def validate(self):
        self.null_order()
        for i, node in enumerate(self.nodes):
            if node.emitting and node.phone is None:
                raise GraphInvalid(f"emitting node {i} has no phone")
        for s, d, lp in self.arcs:
            if not (0 <= s < self.num_nodes and 0 <= d < self.num_nodes):
                raise GraphInvalid(f"arc {s}->{d} out of range")
            if lp > 1e-12 or math.isnan(lp):
                raise GraphInvalid(f"arc {s}->{d} has log-probability {lp}")


class _GraphBuilder:
    def __init__(self, model):
        self.model = model
        self.nodes = []
        self.arcs = []
        self.emissions = []
        self.K = None

    def null(self, label, word=None):
        self.nodes.append(GraphNode(False, label, word))
        self.emissions.append(None)
        return len(self.nodes) - 1

    def arc(self, src, dst, prob_or_log, is_log=False):
        lp = prob_or_log if is_log else _log(prob_or_log)
        if lp > -math.inf:
            self.arcs.append((src, dst, float(lp)))

    def chain(self, phones, word, src, entry_logp, dst, exit_logp=0.0):
        """Expand a phone string into HMM-state nodes wired between src and dst."""
        from .acoustic import concat_hmms

        hmms = []
        for p in phones:
            if p not in self.model.phone_hmms:
                raise UnknownPhone(p)
            hmms.append(self.model.phone_hmms[p])
        joined = concat_hmms(hmms)
        owner = [(p, s) for p, h in zip(phones, hmms) for s in range(h.num_states)]
        base = len(self.nodes)
        logB = _log(joined.B)
        for i, (p, s) in enumerate(owner):
            self.nodes.append(GraphNode(True, f"{p}.{s}", word, p, s))
            self.emissions.append(logB[i])
        for j in range(joined.num_states):
            self.arc(src, base + j, entry_logp + _log(joined.pi[j]), is_log=True)
        for i in range(joined.num_states):
            for j in range(joined.num_states):
                self.arc(base + i, base + j, joined.A[i, j])
        last = base + joined.num_states - 1
        self.arc(last, dst, exit_logp + _log(joined.exit), is_log=True)

    def build(self, start, finals):
        K = None
        for e in self.emissions:
            if e is not None:
                K = len(e)
                break
        table = np.zeros((len(self.nodes), K or 0))
        for i, e in enumerate(self.emissions):
            if e is not None:
                table[i] = e
        g = SearchGraph(self.nodes, self.arcs, start, tuple(finals), table)
        g.validate()
        return g


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _has_silence(model, silence):
    return silence and SIL in model.phone_hmms


def compile_graph(grammar, lexicon, model, silence=True):
    """Compile a grammar into a search graph over the model's phone HMMs.

    Word choices at every branch point share log(1/|V|); after each word of
    a loop the continue/exit options split uniformly. When the model has a
    SIL phone, one SIL is required at the start and end of the utterance.
    """
    for w in grammar.vocabulary:
        if w not in lexicon:
            raise UnknownWord(w)
    b = _GraphBuilder(model)
    use_sil = _has_silence(model, silence)
    V = len(grammar.vocabulary)
    branch = -math.log(V)

    start = b.null("start")
    if use_sil:
        hub = b.null("hub")
        b.chain([SIL], None, start, 0.0, hub)
    else:
        hub = start

    if grammar.kind == "isolated_word":
        layers, loop_last, min_len = 1, False, 1
    else:
        min_len = grammar.min_len or 1
        if grammar.max_len is not None:
            layers, loop_last = grammar.max_len, False
        else:
            layers, loop_last = min_len, True

    hubs = [hub] + [b.null("hub") for _ in range(layers - 1)]
    join = b.null("join")
    for i, h in enumerate(hubs, 1):
        ends = []
        for w in grammar.vocabulary:
            end = b.null("word_end", w)
            b.chain(lexicon.phones(w), w, h, branch, end)
            ends.append(end)
        if grammar.kind == "isolated_word":
            for end in ends:
                b.arc(end, join, 1.0)
            continue
        options = []
        if i < layers:
            options.append(hubs[i])
        elif loop_last:
            options.append(h)
        if i >= min_len:
            options.append(join)
        boundary = b.null("boundary")
        for end in ends:
            b.arc(end, boundary, 1.0)
        for dst in options:
            b.arc(boundary, dst, 1.0 / len(options))

    if use_sil:
        final = b.null("final")
        b.chain([SIL], None, join, 0.0, final)
    else:
        final = join
    return b.build(start, [final])


def compile_transcript_graph(words, lexicon, model, vocab_size=None, silence=True):
    """Single-path graph for a fixed transcript, weighted like a word loop.

    Each word entry pays log(1/vocab_size) and each word boundary pays the
    loop's continue/exit split, so a forced-alignment score is directly
    comparable with an unconstrained word-loop decode.
    """
    if not words:
        raise UnknownWord("<empty transcript>")
    V = vocab_size or len(lexicon)
    b = _GraphBuilder(model)
    use_sil = _has_silence(model, silence)
    start = b.null("start")
    cur = start
    if use_sil:
        cur = b.null("hub")
        b.chain([SIL], None, start, 0.0, cur)
    cont = math.log(0.5)
    for k, w in enumerate(words):
        end = b.null("word_end", w)
        entry = -math.log(V) + (cont if k else 0.0)
        b.chain(lexicon.phones(w), w, cur, entry, end)
        cur = end
    join = b.null("join")
    b.arc(cur, join, 0.5)
    if use_sil:
        final = b.null("final")
        b.chain([SIL], None, join, 0.0, final)
    else:
        final = join
    return b.build(start, [final])

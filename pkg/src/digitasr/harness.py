"""Recognition-ratio evaluation, word alignment scoring and report rendering."""

from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from .corpus import read_wav
from .decoder import DecoderConfig, decode
from .errors import AsrError
from .linguist import Grammar, compile_graph

log = logging.getLogger(__name__)


def truncate_percent(correct, total):
    """``100 * correct / total`` truncated (not rounded) to two decimals, as text."""
    return format_percent(Fraction(100 * correct, total))


def format_percent(value):
    basis = int(Fraction(value) * 100)  # int() truncates toward zero
    return f"{basis // 100}.{basis % 100:02d}"


@dataclass(frozen=True)
class SpeakerScore:
    correct: int
    total: int

    def __post_init__(self):
        if not 0 <= self.correct <= self.total or self.total <= 0:
            raise ValueError(f"bad counts {self.correct}/{self.total}")

    @property
    def exact_ratio(self):
        return Fraction(100 * self.correct, self.total)

    @property
    def ratio(self):
        return float(self.exact_ratio)


@dataclass
class EvalReport:
    per_speaker: dict[str, SpeakerScore]
    per_test: dict[str, list[tuple[int, int, int]]] = field(default_factory=dict)

    @classmethod
    def from_counts(cls, counts, per_test=None):
        """``counts`` maps speaker -> (correct, total)."""
        return cls({s: SpeakerScore(c, t) for s, (c, t) in sorted(counts.items())},
                   per_test or {})

    @property
    def exact_mean(self):
        ratios = [s.exact_ratio for s in self.per_speaker.values()]
        return sum(ratios, Fraction(0)) / len(ratios)

    @property
    def mean_ratio(self):
        return float(self.exact_mean)

    def tsv(self):
        lines = ["speaker\tcorrect\ttotal\tratio_percent"]
        for spk, s in self.per_speaker.items():
            lines.append(f"{spk}\t{s.correct}\t{s.total}\t{format_percent(s.exact_ratio)}")
        correct = sum(s.correct for s in self.per_speaker.values())
        total = sum(s.total for s in self.per_speaker.values())
        lines.append(f"MEAN\t{correct}\t{total}\t{format_percent(self.exact_mean)}")
        return "\n".join(lines) + "\n"

    def table(self):
        """Plain-text table laid out like the per-tester results table."""
        tests = sorted({tid for rows in self.per_test.values() for tid, _, _ in rows})
        head = [""] + [f"Test {t}" for t in tests] + ["Mean Recognition Ratio"]
        body = []
        for spk, s in self.per_speaker.items():
            by_test = {tid: c for tid, c, _ in self.per_test.get(spk, [])}
            row = [spk] + [str(by_test.get(t, "-")) for t in tests]
            row.append(format_percent(s.exact_ratio) + "%")
            body.append(row)
        widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
        fmt = lambda r: "  ".join(c.rjust(w) if i else c.ljust(w)
                                  for i, (c, w) in enumerate(zip(r, widths)))
        out = [fmt(head)] + [fmt(r) for r in body]
        out.append(f"Mean over testers: {format_percent(self.exact_mean)}%")
        return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# alignment scoring


@dataclass(frozen=True)
class WordAlignment:
    hits: int
    substitutions: int
    deletions: int
    insertions: int

    @property
    def reference_length(self):
        return self.hits + self.substitutions + self.deletions

    @property
    def errors(self):
        return self.substitutions + self.deletions + self.insertions


def levenshtein_align(reference, hypothesis):
    """Unit-cost edit alignment; among minimal ones prefer more hits, then fewer insertions."""
    ref, hyp = list(reference), list(hypothesis)
    n, m = len(ref), len(hyp)
    # cell = (cost, -hits, insertions, hits, subs, dels, ins); lexicographic min.
    table = [[None] * (m + 1) for _ in range(n + 1)]
    table[0][0] = (0, 0, 0, 0, 0, 0, 0)
    for i in range(1, n + 1):
        table[i][0] = (i, 0, 0, 0, 0, i, 0)
    for j in range(1, m + 1):
        table[0][j] = (j, 0, j, 0, 0, 0, j)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            c, nh, ni, h, s, d, k = table[i - 1][j - 1]
            if ref[i - 1] == hyp[j - 1]:
                diag = (c, nh - 1, ni, h + 1, s, d, k)
            else:
                diag = (c + 1, nh, ni, h, s + 1, d, k)
            c, nh, ni, h, s, d, k = table[i - 1][j]
            up = (c + 1, nh, ni, h, s, d + 1, k)
            c, nh, ni, h, s, d, k = table[i][j - 1]
            left = (c + 1, nh, ni + 1, h, s, d, k + 1)
            table[i][j] = min(diag, up, left)
    _, _, _, h, s, d, k = table[n][m]
    return WordAlignment(h, s, d, k)


# --------------------------------------------------------------------------
# evaluation


def _decode_entry(args):
    path, words, model, graph, cfg = args
    try:
        hyp = decode(model.symbols(read_wav(path)), graph, cfg)
        return hyp.words
    except AsrError as e:
        log.warning("decode failed for %s: %s", path, e)
        return None


def decode_manifest(manifest, model, graph, cfg=None, jobs=1):
    work = [(manifest.resolve(e), e.transcript, model, graph, cfg) for e in manifest]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_decode_entry, work, chunksize=8))
    return [_decode_entry(w) for w in work]


def spellable_words(lexicon, model):
    """Lexicon words whose every phone has an HMM in ``model``."""
    return tuple(w for w in lexicon.words
                 if all(p in model.phone_hmms for p in lexicon.phones(w)))


def evaluate_isolated(manifest, model, lexicon, cfg=None, jobs=1, silence=True,
                      vocabulary=None):
    """Decode every single-word utterance with the isolated-word grammar.

    The grammar covers ``vocabulary`` (default: every lexicon word the model
    can spell). Decode failures count as misrecognitions. Tests are grouped
    by the manifest repetition index.
    """
    for e in manifest:
        if len(e.transcript) != 1:
            raise ValueError(f"{e.audio_path}: isolated evaluation needs one word per entry")
    vocabulary = tuple(vocabulary or spellable_words(lexicon, model))
    if not vocabulary:
        raise ValueError("model cannot spell any lexicon word")
    graph = compile_graph(Grammar("isolated_word", vocabulary), lexicon, model, silence)
    hyps = decode_manifest(manifest, model, graph, cfg or DecoderConfig(), jobs)
    counts = defaultdict(lambda: [0, 0])
    tests = defaultdict(lambda: defaultdict(lambda: [0, 0]))
    for e, hyp in zip(manifest, hyps):
        ok = hyp is not None and tuple(hyp) == e.transcript
        counts[e.speaker_id][0] += ok
        counts[e.speaker_id][1] += 1
        tests[e.speaker_id][e.repetition_index][0] += ok
        tests[e.speaker_id][e.repetition_index][1] += 1
    per_test = {
        spk: [(tid, c, t) for tid, (c, t) in sorted(rows.items())]
        for spk, rows in tests.items()
    }
    return EvalReport.from_counts({s: tuple(v) for s, v in counts.items()}, per_test)

"""Command-line entry point: synth-corpus, train, decode, eval, validate-lexicon."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .acoustic import AcousticModel, train_acoustic
from .corpus import SynthSpec, load_manifest, read_wav, synth_corpus
from .decoder import DecoderConfig, decode
from .errors import AsrError, ConfigInvalid
from .frontend import FrontendConfig
from .harness import evaluate_isolated, spellable_words
from .linguist import (
    Grammar,
    compile_graph,
    default_arabic_digits,
    load_dictionary,
    load_phone_set,
    parse_grammar,
    standard_arabic_phones,
    validate_lexicon,
)

log = logging.getLogger("digitasr")

FRONTEND_KEYS = {
    "pre_emphasis", "frame_length_ms", "frame_shift_ms", "fft_size",
    "num_mel_filters", "num_cepstra", "include_deltas",
}
DECODER_KEYS = {"beam_width", "max_active", "word_insertion_penalty"}
TRAIN_KEYS = {"codebook_size", "max_iters", "tol", "states_per_phone", "seed", "silence"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def read_config(path):
    """Plain ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in FRONTEND_KEYS | DECODER_KEYS | TRAIN_KEYS:
            raise ConfigInvalid(f"{path}:{lineno}: bad config line {raw!r}")
        values[key] = value.strip()
    return values


def _settings(args):
    """Config file values overridden by any explicitly given flags."""
    values = read_config(args.config) if getattr(args, "config", None) else {}
    for key in FRONTEND_KEYS | DECODER_KEYS | TRAIN_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


def _frontend_cfg(values):
    return FrontendConfig.from_mapping(
        {k: v for k, v in values.items() if k in FRONTEND_KEYS}).validate()


def _decoder_cfg(values):
    kw = {}
    if "beam_width" in values:
        kw["beam_width"] = float(values["beam_width"])
    if "max_active" in values:
        kw["max_active"] = int(values["max_active"])
    if "word_insertion_penalty" in values:
        kw["word_insertion_penalty"] = float(values["word_insertion_penalty"])
    return DecoderConfig(**kw)


def _lexicon(args):
    if getattr(args, "dict", None):
        return load_dictionary(args.dict)
    return default_arabic_digits()[1]


def _bool(value):
    if isinstance(value, bool):
        return value
    return str(value).lower() in ("1", "true", "yes", "on")


def cmd_synth(args):
    lexicon = _lexicon(args)
    words = tuple(args.words.split(",")) if args.words else lexicon.words
    spec = SynthSpec(words, args.speakers, args.repetitions, args.seed,
                     args.sample_rate, args.speaker_prefix, not args.no_silence)
    manifest = synth_corpus(spec, lexicon, args.out)
    print(f"wrote {len(manifest)} utterances to {Path(args.out) / 'manifest.tsv'}")
    return 0


def cmd_train(args):
    values = _settings(args)
    lexicon = _lexicon(args)
    manifest = load_manifest(args.manifest, lexicon)

    def progress(it, ll):
        print(f"iter {it}\tloglik {ll!r}")
        sys.stdout.flush()

    model, report = train_acoustic(
        manifest, lexicon, _frontend_cfg(values),
        K=int(values.get("codebook_size", 256)),
        max_iters=int(values.get("max_iters", 20)),
        tol=float(values.get("tol", 1e-4)),
        states_per_phone=int(values.get("states_per_phone", 3)),
        seed=int(values.get("seed", 0)),
        silence=_bool(values.get("silence", True)),
        progress=progress,
    )
    model.save(args.out)
    print(f"iterations {report.iterations_run}\tconverged {str(report.converged).lower()}")
    return 0


def _grammar(args, lexicon, model):
    if args.grammar_file:
        return parse_grammar(Path(args.grammar_file).read_text("utf-8"))
    return Grammar(args.grammar, spellable_words(lexicon, model) or lexicon.words)


def cmd_decode(args):
    values = _settings(args)
    lexicon = _lexicon(args)
    model = AcousticModel.load(args.model)
    graph = compile_graph(_grammar(args, lexicon, model), lexicon, model)
    cfg = _decoder_cfg(values)
    for wav in args.wavs:
        hyp = decode(model.symbols(read_wav(wav)), graph, cfg)
        print(hyp.format())
    return 0


def cmd_eval(args):
    values = _settings(args)
    lexicon = _lexicon(args)
    model = AcousticModel.load(args.model)
    manifest = load_manifest(args.manifest, lexicon)
    report = evaluate_isolated(manifest, model, lexicon, _decoder_cfg(values), args.jobs)
    sys.stdout.write(report.table())
    if args.tsv:
        Path(args.tsv).write_text(report.tsv(), "utf-8")
    else:
        sys.stdout.write("\n" + report.tsv())
    return 0


def cmd_validate(args):
    lexicon = load_dictionary(args.dict) if args.dict else default_arabic_digits()[1]
    if args.phones:
        phones = load_phone_set(args.phones)
    elif args.dict:
        phones = standard_arabic_phones()
    else:
        phones = default_arabic_digits()[0]
    violations = validate_lexicon(lexicon, phones)
    for v in violations:
        print(v)
    if violations:
        print(f"{len(violations)} violation(s)", file=sys.stderr)
        return 2
    print(f"{len(lexicon)} words, no violations")
    return 0


def _add_decoder_flags(p):
    p.add_argument("--beam-width", dest="beam_width", type=float)
    p.add_argument("--max-active", dest="max_active", type=int)
    p.add_argument("--word-insertion-penalty", dest="word_insertion_penalty", type=float)


def build_parser():
    parser = _Parser(prog="digitasr", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-corpus", help="generate a synthetic digit corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--words", help="comma-separated words (default: whole lexicon)")
    p.add_argument("--speakers", type=int, default=6)
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--speaker-prefix", default="S")
    p.add_argument("--no-silence", action="store_true")
    p.add_argument("--dict")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train an acoustic model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--dict")
    p.add_argument("--codebook-size", dest="codebook_size", type=int)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--states-per-phone", dest="states_per_phone", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="decode WAV files")
    p.add_argument("--model", required=True)
    p.add_argument("--grammar", choices=("isolated_word", "word_loop"), default="isolated_word")
    p.add_argument("--grammar-file")
    p.add_argument("--config")
    p.add_argument("--dict")
    _add_decoder_flags(p)
    p.add_argument("wavs", nargs="+")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="isolated-word recognition ratios per speaker")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--tsv")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config")
    p.add_argument("--dict")
    _add_decoder_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("validate-lexicon", help="check phonotactic constraints")
    p.add_argument("--dict")
    p.add_argument("--phones")
    p.set_defaults(func=cmd_validate)
    return parser


def run_cli(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (AsrError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(run_cli())

"""Audio file I/O, corpus manifests and the synthetic digit-corpus generator."""

from __future__ import annotations

import math
import wave
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DuplicatePath,
    MalformedWav,
    NotFound,
    ParseError,
    UnknownWord,
    UnsupportedWav,
)
from .linguist import SIL

SAMPLE_RATE = 16000


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("audio must be mono (1-D)")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if samples.size and (np.abs(samples) > 1.0).any():
            raise ValueError("samples must lie in [-1, 1]")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self):
        return self.samples.size / self.sample_rate_hz


def read_wav(path):
    """Read a 16-bit PCM mono WAV; samples are scaled by 1/32768."""
    path = Path(path)
    if not path.exists():
        raise NotFound(f"no such file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(12)
    if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
        raise MalformedWav(f"{path}: not a RIFF/WAVE file")
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            if channels != 1:
                raise UnsupportedWav(f"{path}: {channels} channels, expected mono")
            if width != 2:
                raise UnsupportedWav(f"{path}: {8 * width}-bit samples, expected 16")
            nframes = w.getnframes()
            raw = w.readframes(nframes)
    except wave.Error as e:
        msg = str(e)
        if msg.startswith("unknown format"):
            raise UnsupportedWav(f"{path}: {msg}") from None
        raise MalformedWav(f"{path}: {msg}") from None
    except EOFError:
        raise MalformedWav(f"{path}: truncated chunk") from None
    if len(raw) != 2 * nframes:
        raise MalformedWav(f"{path}: data chunk shorter than declared")
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(pcm.astype(np.float64) / 32768.0, rate)


def quantize_pcm(samples):
    # Scale by 32768 so that read_wav (which divides by 32768) round-trips bit-exactly.
    q = np.round(np.asarray(samples, dtype=np.float64) * 32768.0)
    return np.clip(q, -32768, 32767).astype("<i2")


def write_wav(buffer, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(buffer.sample_rate_hz)
        w.writeframes(quantize_pcm(buffer.samples).tobytes())


# --------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class ManifestEntry:
    audio_path: str
    transcript: tuple[str, ...]
    speaker_id: str
    repetition_index: int


@dataclass(frozen=True)
class CorpusManifest:
    entries: tuple[ManifestEntry, ...]
    root: Path = Path(".")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def resolve(self, entry):
        return self.root / entry.audio_path

    @property
    def speakers(self):
        return sorted({e.speaker_id for e in self.entries})


def parse_manifest(text, lexicon, root=Path(".")):
    entries, seen = [], set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise ParseError(f"expected 4 tab-separated columns, got {len(cols)}", lineno)
        audio, speaker, rep, words = cols
        try:
            rep = int(rep)
        except ValueError:
            raise ParseError(f"repetition index {rep!r} is not an integer", lineno) from None
        if rep < 1:
            raise ParseError("repetition index must be >= 1", lineno)
        transcript = tuple(words.split())
        if not audio or not speaker or not transcript:
            raise ParseError("empty field", lineno)
        for w in transcript:
            if w not in lexicon:
                raise UnknownWord(w, lineno)
        if audio in seen:
            raise DuplicatePath(f"duplicate audio path {audio!r}", lineno)
        seen.add(audio)
        entries.append(ManifestEntry(audio, transcript, speaker, rep))
    if not entries:
        raise ParseError("manifest contains no entries")
    return CorpusManifest(tuple(entries), Path(root))


def load_manifest(path, lexicon):
    path = Path(path)
    if not path.exists():
        raise NotFound(f"no such file: {path}")
    return parse_manifest(path.read_text("utf-8"), lexicon, path.parent)


def format_manifest(manifest):
    lines = [
        f"{e.audio_path}\t{e.speaker_id}\t{e.repetition_index}\t{' '.join(e.transcript)}"
        for e in manifest.entries
    ]
    return "\n".join(lines) + "\n"


def save_manifest(manifest, path):
    Path(path).write_text(format_manifest(manifest), "utf-8")


# --------------------------------------------------------------------------
# synthetic corpus

# (low, high) sine frequencies per phone. Low tones step by >=1.3x, high
# tones by >=1.28x, so any two phones stay apart under the +-8% speaker warp.
_LOW = (330.0, 430.0, 560.0, 730.0, 950.0, 1240.0)
_HIGH = (1500.0, 1950.0, 2500.0, 3250.0)
PHONE_TONES = dict(zip(
    ("W", "AA", "HH", "I", "D", "HZ", "TH", "N", "A", "Y", "L",
     "R", "B", "AYN", "KH", "M", "S", "T", "II", "F", "SS", "U", "UU"),
    [(lo, hi) for hi in _HIGH for lo in _LOW],
))

PHONE_MS = (80.0, 160.0)
SIL_MS = (100.0, 150.0)
SNR_DB = 30.0
TONE_AMPS = (0.3, 0.2)
SPEAKER_WARP = (0.92, 1.08)


@dataclass(frozen=True)
class SynthSpec:
    words: tuple[str, ...]
    speakers: int = 6
    repetitions: int = 5
    seed: int = 42
    sample_rate_hz: int = SAMPLE_RATE
    speaker_prefix: str = "S"
    silence: bool = True

    def __post_init__(self):
        if not self.words:
            raise ValueError("SynthSpec.words is empty")
        if self.speakers < 1 or self.repetitions < 1:
            raise ValueError("speakers and repetitions must be >= 1")

    def speaker_id(self, index):
        return f"{self.speaker_prefix}{index + 1}"


def phone_tones(phone):
    if phone in PHONE_TONES:
        return PHONE_TONES[phone]
    # Third-party phones get a stable signature derived from the label.
    h = zlib.crc32(phone.encode("utf-8"))
    lo = 300.0 + (h % 1000)
    hi = 1400.0 + ((h >> 10) % 2000)
    return lo, hi


def speaker_warp(spec, speaker):
    rng = np.random.default_rng([spec.seed, 1, speaker])
    return float(rng.uniform(*SPEAKER_WARP))


def plan_utterance(spec, lexicon, word_index, speaker):
    """Segment plan ``[(phone, duration_s), ...]`` for one (word, speaker).

    Durations depend only on the seed, word and speaker, so repetitions of a
    word by one speaker share a plan and differ only in noise and phase.
    """
    word = spec.words[word_index]
    phones = list(lexicon.phones(word))
    rng = np.random.default_rng([spec.seed, 2, speaker, word_index])
    plan = []
    if spec.silence:
        plan.append((SIL, rng.uniform(*SIL_MS) / 1000.0))
    for p in phones:
        plan.append((p, rng.uniform(*PHONE_MS) / 1000.0))
    if spec.silence:
        plan.append((SIL, rng.uniform(*SIL_MS) / 1000.0))
    return plan


def render_utterance(spec, lexicon, word_index, speaker, repetition):
    plan = plan_utterance(spec, lexicon, word_index, speaker)
    sr = spec.sample_rate_hz
    warp = speaker_warp(spec, speaker)
    rng = np.random.default_rng([spec.seed, 3, speaker, word_index, repetition])
    signal_rms = math.sqrt(sum(a * a / 2.0 for a in TONE_AMPS))
    noise_std = signal_rms / 10.0 ** (SNR_DB / 20.0)
    parts = []
    for phone, dur in plan:
        n = max(1, int(round(dur * sr)))
        if phone == SIL:
            parts.append(np.zeros(n))
            continue
        t = np.arange(n) / sr
        seg = np.zeros(n)
        for f, amp in zip(phone_tones(phone), TONE_AMPS):
            seg += amp * np.sin(2.0 * np.pi * f * warp * t + rng.uniform(0, 2 * np.pi))
        parts.append(seg)
    x = np.concatenate(parts)
    x += rng.normal(0.0, noise_std, size=x.size)
    return AudioBuffer(np.clip(x, -1.0, 1.0), sr)


def synth_corpus(spec, lexicon, out_dir):
    """Write one WAV per (word, speaker, repetition) and a ``manifest.tsv``."""
    out_dir = Path(out_dir)
    for w in spec.words:
        if w not in lexicon:
            raise UnknownWord(w)
    entries = []
    for s in range(spec.speakers):
        speaker = spec.speaker_id(s)
        for r in range(spec.repetitions):
            for wi, word in enumerate(spec.words):
                rel = f"{speaker}/{word}_{r + 1}.wav"
                audio = render_utterance(spec, lexicon, wi, s, r)
                write_wav(audio, out_dir / rel)
                entries.append(ManifestEntry(rel, (word,), speaker, r + 1))
    manifest = CorpusManifest(tuple(entries), out_dir)
    save_manifest(manifest, out_dir / "manifest.tsv")
    return manifest

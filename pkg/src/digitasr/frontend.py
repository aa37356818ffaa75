"""MFCC front end and the vector quantizer that feeds the discrete HMMs."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.fft import dct, idct

from .errors import (
    ConfigInvalid,
    DimensionMismatch,
    InsufficientData,
    InvalidK,
    ParseError,
    TooShort,
)

LOG_FLOOR = 1e-10
LBG_SPLIT = 0.01
LBG_TOL = 1e-5
LBG_MAX_ITERS = 50


@dataclass(frozen=True)
class FrontendConfig:
    pre_emphasis: float = 0.97
    frame_length_ms: float = 25.0
    frame_shift_ms: float = 10.0
    fft_size: int = 512
    num_mel_filters: int = 26
    num_cepstra: int = 13
    include_deltas: bool = True

    def validate(self, sample_rate_hz=None):
        if not 0.0 <= self.pre_emphasis < 1.0:
            raise ConfigInvalid("pre_emphasis must be in [0, 1)")
        if self.frame_shift_ms <= 0 or self.frame_shift_ms > self.frame_length_ms:
            raise ConfigInvalid("need 0 < frame_shift_ms <= frame_length_ms")
        if self.fft_size < 1 or self.fft_size & (self.fft_size - 1):
            raise ConfigInvalid("fft_size must be a power of two")
        if not 1 <= self.num_cepstra <= self.num_mel_filters:
            raise ConfigInvalid("need 1 <= num_cepstra <= num_mel_filters")
        if sample_rate_hz is not None:
            frame, shift = self.frame_samples(sample_rate_hz)
            if frame > self.fft_size:
                raise ConfigInvalid(f"fft_size {self.fft_size} < frame of {frame} samples")
            if shift < 1:
                raise ConfigInvalid("frame shift rounds to zero samples")
        return self

    def frame_samples(self, sample_rate_hz):
        return (int(round(self.frame_length_ms * sample_rate_hz / 1000.0)),
                int(round(self.frame_shift_ms * sample_rate_hz / 1000.0)))

    @property
    def feature_dim(self):
        return self.num_cepstra * (2 if self.include_deltas else 1)

    def to_lines(self):
        return [f"{k} {_fmt_value(v)}" for k, v in asdict(self).items()]

    @classmethod
    def from_mapping(cls, mapping):
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, value in mapping.items():
            if key not in types:
                raise ConfigInvalid(f"unknown frontend key {key!r}")
            kwargs[key] = _coerce(types[key], value)
        return cls(**kwargs)


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(type_name, value):
    if not isinstance(value, str):
        return value
    if type_name in ("bool", bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigInvalid(f"not a boolean: {value!r}")
    if type_name in ("int", int):
        return int(value)
    return float(value)


@dataclass(frozen=True)
class FeatureSequence:
    frames: np.ndarray  # (T, D)
    frame_shift_ms: float = 10.0

    def __len__(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.frames.shape[1]


@dataclass(frozen=True)
class SymbolSequence:
    symbols: np.ndarray  # int, values in [0, K)

    def __len__(self):
        return len(self.symbols)


def mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_inverse(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def frame_count(length, frame, shift):
    if length < frame:
        return 0
    return (length - frame) // shift + 1


def mel_filterbank(num_filters, fft_size, sample_rate_hz):
    """Triangular filters over rfft bins, centers equally spaced in mel.

    Returns ``(weights, edges_hz)`` where ``weights`` is
    ``(num_filters, fft_size // 2 + 1)`` and filter ``m`` spans
    ``edges_hz[m] .. edges_hz[m + 2]`` peaking at ``edges_hz[m + 1]``.
    """
    edges = mel_inverse(np.linspace(0.0, mel(sample_rate_hz / 2.0), num_filters + 2))
    freqs = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down)), edges


def frame_signal(x, frame, shift):
    n = frame_count(len(x), frame, shift)
    idx = np.arange(frame)[None, :] + shift * np.arange(n)[:, None]
    return x[idx]


def hamming(n):
    if n == 1:
        return np.ones(1)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(n) / (n - 1))


def log_mel_energies(audio, cfg=None):
    """Per-frame log filterbank energies, ``(T, num_mel_filters)``."""
    cfg = (cfg or FrontendConfig()).validate(audio.sample_rate_hz)
    frame, shift = cfg.frame_samples(audio.sample_rate_hz)
    x = np.asarray(audio.samples, dtype=np.float64)
    if len(x) < frame:
        raise TooShort(f"{len(x)} samples is shorter than one {frame}-sample frame")
    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - cfg.pre_emphasis * x[:-1]
    frames = frame_signal(y, frame, shift) * hamming(frame)
    power = np.abs(np.fft.rfft(frames, n=cfg.fft_size, axis=1)) ** 2
    weights, _ = mel_filterbank(cfg.num_mel_filters, cfg.fft_size, audio.sample_rate_hz)
    return np.log(np.maximum(power @ weights.T, LOG_FLOOR))


def dct2(x, n_keep=None):
    """Orthonormal DCT-II along the last axis, truncated to ``n_keep``."""
    c = dct(np.asarray(x, dtype=np.float64), type=2, norm="ortho", axis=-1)
    return c if n_keep is None else c[..., :n_keep]


def idct2(c):
    return idct(np.asarray(c, dtype=np.float64), type=2, norm="ortho", axis=-1)


def deltas(c):
    padded = np.concatenate([c[:1], c, c[-1:]], axis=0)
    return (padded[2:] - padded[:-2]) / 2.0


def compute_mfcc(audio, cfg=None):
    cfg = cfg or FrontendConfig()
    cep = dct2(log_mel_energies(audio, cfg), cfg.num_cepstra)
    if cfg.include_deltas:
        cep = np.hstack([cep, deltas(cep)])
    return FeatureSequence(cep, cfg.frame_shift_ms)


# --------------------------------------------------------------------------
# vector quantization


@dataclass(frozen=True)
class Codebook:
    codewords: np.ndarray  # (K, D)

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=np.float64)
        if cw.ndim != 2 or cw.shape[0] < 1:
            raise InvalidK("codebook needs at least one codeword")
        if not np.isfinite(cw).all():
            raise ValueError("codewords must be finite")
        object.__setattr__(self, "codewords", cw)

    @property
    def K(self):
        return self.codewords.shape[0]

    @property
    def dim(self):
        return self.codewords.shape[1]

    def to_lines(self):
        lines = [f"CODEBOOK v1 {self.K} {self.dim}"]
        lines += [" ".join(repr(float(v)) for v in row) for row in self.codewords]
        return lines

    @classmethod
    def from_lines(cls, lines):
        head = lines[0].split()
        if len(head) != 4 or head[:2] != ["CODEBOOK", "v1"]:
            raise ParseError(f"bad codebook header {lines[0]!r}", 1)
        K, D = int(head[2]), int(head[3])
        if len(lines) < K + 1:
            raise ParseError("codebook truncated")
        rows = []
        for i in range(K):
            row = [float(v) for v in lines[1 + i].split()]
            if len(row) != D:
                raise ParseError(f"expected {D} values", i + 2)
            rows.append(row)
        return cls(np.array(rows, dtype=np.float64).reshape(K, D))

    def save(self, path):
        Path(path).write_text("\n".join(self.to_lines()) + "\n", "utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_lines(Path(path).read_text("utf-8").splitlines())


def _stack(features):
    if isinstance(features, np.ndarray):
        return np.atleast_2d(np.asarray(features, dtype=np.float64))
    mats = [f.frames if isinstance(f, FeatureSequence) else np.atleast_2d(f) for f in features]
    if not mats:
        return np.zeros((0, 0))
    return np.vstack(mats).astype(np.float64)


def nearest_codeword(X, C, chunk=4096):
    """Index of the nearest codeword per row (first index wins on ties).

    Candidates come from the expansion |x|^2 - 2x.c + |c|^2. Rows where a
    second codeword lies within rounding slack of the best are settled with
    exact squared differences, so ties resolve as in a direct search.
    """
    n = X.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n)
    cc = (C ** 2).sum(axis=1)
    for a in range(0, n, chunk):
        x = X[a:a + chunk]
        xx = (x ** 2).sum(axis=1)
        approx = xx[:, None] - 2.0 * (x @ C.T) + cc[None, :]
        slack = 1e-9 * (xx + cc.max()) + 1e-300
        near = approx <= (approx.min(axis=1) + slack)[:, None]
        lab = near.argmax(axis=1)
        multi = np.flatnonzero(near.sum(axis=1) > 1)
        if multi.size:
            exact = ((x[multi, None, :] - C[None, :, :]) ** 2).sum(axis=2)
            exact[~near[multi]] = np.inf
            lab[multi] = exact.argmin(axis=1)
        labels[a:a + chunk] = lab
        dists[a:a + chunk] = ((x - C[lab]) ** 2).sum(axis=1)
    return labels, dists


def _split(c, rng, scale):
    up, down = c * (1 + LBG_SPLIT), c * (1 - LBG_SPLIT)
    same = np.all(up == down, axis=-1)
    if np.any(same):
        # A zero codeword cannot be split multiplicatively; nudge along a random direction.
        nudge = LBG_SPLIT * scale * rng.standard_normal(c.shape)
        up = np.where(same[..., None], c + nudge, up)
        down = np.where(same[..., None], c - nudge, down)
    return up, down


def _kmeans(X, C, rng, scale, history):
    prev = None
    for _ in range(LBG_MAX_ITERS):
        labels, d = nearest_codeword(X, C)
        distortion = float(d.mean())
        history.append(distortion)
        if prev is not None and (prev == 0.0 or (prev - distortion) / prev < LBG_TOL):
            break
        prev = distortion
        counts = np.bincount(labels, minlength=C.shape[0])
        order = np.argsort(labels, kind="stable")
        present = np.flatnonzero(counts)
        sums = np.zeros_like(C)
        starts = np.concatenate([[0], np.cumsum(counts[present])[:-1]])
        sums[present] = np.add.reduceat(X[order], starts, axis=0)
        C = C.copy()
        filled = counts > 0
        C[filled] = sums[filled] / counts[filled, None]
        cell_err = np.bincount(labels, weights=d, minlength=C.shape[0])
        for k in np.flatnonzero(~filled):
            # Re-seed an empty cell beside the worst cell's codeword; the worst
            # codeword itself stays put so distortion cannot rise.
            worst = int(np.argmax(cell_err))
            C[k] = _split(C[worst], rng, scale)[0]
            cell_err[worst] = -1.0
    return C


def lbg_train(features, K, seed=0, trace=None):
    """Train a K-codeword codebook by Linde-Buzo-Gray splitting.

    ``trace``, when a list, receives one list of per-iteration distortions
    for every split level (level 0 is the single-centroid codebook).
    """
    if K < 1 or K & (K - 1):
        raise InvalidK(f"K={K} is not a power of two")
    X = _stack(features)
    if X.shape[0] < K:
        raise InsufficientData(f"{X.shape[0]} frames for K={K}")
    rng = np.random.default_rng(seed)
    scale = float(X.std()) or 1.0
    C = X.mean(axis=0, keepdims=True)
    level = [float(nearest_codeword(X, C)[1].mean())]
    if trace is not None:
        trace.append(level)
    while C.shape[0] < K:
        up, down = _split(C, rng, scale)
        C = np.empty((2 * C.shape[0], C.shape[1]))
        C[0::2], C[1::2] = up, down
        history = []
        C = _kmeans(X, C, rng, scale, history)
        if trace is not None:
            trace.append(history)
    return Codebook(C)


def distortion(features, codebook):
    X = _stack(features)
    return float(nearest_codeword(X, codebook.codewords)[1].mean())


def quantize(features, codebook):
    X = features.frames if isinstance(features, FeatureSequence) else np.atleast_2d(features)
    if X.shape[1] != codebook.dim:
        raise DimensionMismatch(f"feature dim {X.shape[1]} != codebook dim {codebook.dim}")
    return SymbolSequence(nearest_codeword(X, codebook.codewords)[0])


def load_frontend_lines(lines):
    mapping = {}
    for line in lines:
        key, _, value = line.partition(" ")
        mapping[key] = value.strip()
    return FrontendConfig.from_mapping(mapping)

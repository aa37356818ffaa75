"""Discrete-emission phone HMMs and embedded Baum-Welch training.

Phone models carry an explicit exit probability out of their last state.
An HMM with ``exit > 0`` is a segment model: an observation sequence is
only explained by paths that leave the last state after the final frame,
which is what lets phone models concatenate into word and utterance
models. With ``exit == 0`` the HMM is an ordinary free-running model and
the likelihood sums over every state at the final frame.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    AlphabetMismatch,
    EmptyList,
    EmptyObservation,
    ParseError,
    SymbolOutOfRange,
    UnknownPhone,
)
from .frontend import (
    Codebook,
    FrontendConfig,
    SymbolSequence,
    compute_mfcc,
    lbg_train,
    load_frontend_lines,
    quantize,
)

log = logging.getLogger(__name__)

EMISSION_EPS = 1e-8
STOCHASTIC_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteHmm:
    pi: np.ndarray  # (S,)
    A: np.ndarray  # (S, S)
    B: np.ndarray  # (S, K)
    exit: float = 0.0

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=np.float64)
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(self.B, dtype=np.float64))
        S = pi.shape[0]
        if A.shape != (S, S) or B.shape[0] != S:
            raise ValueError(f"inconsistent shapes pi{pi.shape} A{A.shape} B{B.shape}")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "exit", float(self.exit))

    @property
    def num_states(self):
        return self.pi.shape[0]

    @property
    def alphabet_size(self):
        return self.B.shape[1]

    def row_mass(self):
        """Outgoing probability per state, counting the exit from the last state."""
        mass = self.A.sum(axis=1)
        mass[-1] += self.exit
        return mass

    def check_stochastic(self, tol=STOCHASTIC_TOL):
        ok = (
            abs(self.pi.sum() - 1.0) <= tol
            and np.all(np.abs(self.row_mass() - 1.0) <= tol)
            and np.all(np.abs(self.B.sum(axis=1) - 1.0) <= tol)
            and (self.pi >= 0).all() and (self.A >= 0).all() and (self.B >= 0).all()
            and self.exit >= 0
        )
        return bool(ok)

    def is_bakis(self):
        S = self.num_states
        i, j = np.indices((S, S))
        return bool(np.all(self.A[(j < i) | (j > i + 1)] == 0.0))


def _symbols(obs, K):
    o = np.asarray(obs.symbols if isinstance(obs, SymbolSequence) else obs, dtype=np.int64)
    if o.size == 0:
        raise EmptyObservation("observation sequence is empty")
    if (o < 0).any() or (o >= K).any():
        raise SymbolOutOfRange(f"symbols must lie in [0, {K})")
    return o


def _final_weights(hmm):
    if hmm.exit > 0:
        f = np.zeros(hmm.num_states)
        f[-1] = hmm.exit
        return f
    return np.ones(hmm.num_states)


def frame_emissions(hmm, o):
    """``(T, S)`` emission probabilities; the last frame also carries the exit weight."""
    Bo = hmm.B[:, o].T.copy()
    Bo[-1] *= _final_weights(hmm)
    return Bo


def forward(hmm, obs):
    """Scaled forward pass.

    Returns ``(log_likelihood, scaled_alpha, scales)``; every row of
    ``scaled_alpha`` sums to one and the log-likelihood is the sum of the
    log scales. A zero-probability observation gives ``-inf``.
    """
    o = _symbols(obs, hmm.alphabet_size)
    Bo = frame_emissions(hmm, o)
    T, S = Bo.shape
    alpha = np.full((T, S), np.nan)
    scales = np.zeros(T)
    a = hmm.pi * Bo[0]
    for t in range(T):
        if t:
            a = (alpha[t - 1] @ hmm.A) * Bo[t]
        c = a.sum()
        if c <= 0.0:
            return -math.inf, alpha, scales
        scales[t] = c
        alpha[t] = a / c
    return float(np.log(scales).sum()), alpha, scales


def backward(hmm, obs, scales):
    """Scaled backward pass paired with :func:`forward`.

    Shares the forward scales, so ``sum_i alpha[t, i] * beta[t, i] == 1``
    at every frame and ``alpha * beta`` is the state posterior.
    """
    o = _symbols(obs, hmm.alphabet_size)
    Bo = frame_emissions(hmm, o)
    T = Bo.shape[0]
    beta = np.empty((T, hmm.num_states))
    beta[-1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = hmm.A @ (Bo[t + 1] * beta[t + 1]) / scales[t + 1]
    return beta


def posteriors(hmm, obs):
    ll, alpha, scales = forward(hmm, obs)
    if not math.isfinite(ll):
        return ll, None
    beta = backward(hmm, obs, scales)
    return ll, alpha * beta


def concat_hmms(hmms):
    """Chain HMMs so each one's exit mass enters the next one's initial states."""
    hmms = list(hmms)
    if not hmms:
        raise EmptyList("no HMMs to concatenate")
    K = hmms[0].alphabet_size
    if any(h.alphabet_size != K for h in hmms):
        raise AlphabetMismatch("HMMs disagree on alphabet size")
    if len(hmms) == 1:
        return hmms[0]
    sizes = [h.num_states for h in hmms]
    S = sum(sizes)
    A = np.zeros((S, S))
    B = np.vstack([h.B for h in hmms])
    off = 0
    for k, h in enumerate(hmms):
        n = h.num_states
        A[off:off + n, off:off + n] = h.A
        if k + 1 < len(hmms):
            A[off + n - 1, off + n:off + n + sizes[k + 1]] += h.exit * hmms[k + 1].pi
        off += n
    pi = np.zeros(S)
    pi[:sizes[0]] = hmms[0].pi
    return DiscreteHmm(pi, A, B, hmms[-1].exit)


@dataclass
class AcousticModel:
    phone_hmms: dict[str, DiscreteHmm]
    codebook: Codebook | None = None
    frontend_cfg: FrontendConfig = field(default_factory=FrontendConfig)
    states_per_phone: int = 3

    @property
    def alphabet_size(self):
        return next(iter(self.phone_hmms.values())).alphabet_size

    @property
    def phones(self):
        return tuple(self.phone_hmms)

    def hmm(self, phone):
        try:
            return self.phone_hmms[phone]
        except KeyError:
            raise UnknownPhone(phone) from None

    def utterance_hmm(self, phones):
        return concat_hmms([self.hmm(p) for p in phones])

    def symbols(self, audio):
        """Front end + quantizer for one audio buffer."""
        if self.codebook is None:
            raise ValueError("model has no codebook")
        return quantize(compute_mfcc(audio, self.frontend_cfg), self.codebook)

    # -- persistence ------------------------------------------------------

    def to_text(self):
        if self.codebook is None:
            raise ValueError("cannot save a model without a codebook")
        lines = ["AAM v1", "FRONTEND"]
        lines += self.frontend_cfg.to_lines()
        lines.append("END")
        lines += self.codebook.to_lines()
        lines.append(f"STATES_PER_PHONE {self.states_per_phone}")
        lines.append(f"PHONES {len(self.phone_hmms)}")
        for label, h in self.phone_hmms.items():
            lines.append(f"PHONE {label} {h.num_states} {h.alphabet_size} {_r(h.exit)}")
            lines.append(_row(h.pi))
            lines += [_row(r) for r in h.A]
            lines += [_row(r) for r in h.B]
        return "\n".join(lines) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_text(), "utf-8")

    @classmethod
    def from_text(cls, text):
        lines = text.splitlines()
        pos = 0

        def take():
            nonlocal pos
            if pos >= len(lines):
                raise ParseError("model file truncated", pos + 1)
            pos += 1
            return lines[pos - 1]

        if take().strip() != "AAM v1":
            raise ParseError("not an AAM v1 model file", 1)
        if take().strip() != "FRONTEND":
            raise ParseError("expected FRONTEND", pos)
        fe = []
        while (line := take()).strip() != "END":
            fe.append(line.strip())
        cfg = load_frontend_lines(fe)
        head = take()
        K = int(head.split()[2])
        cb = Codebook.from_lines([head] + [take() for _ in range(K)])
        spp = int(take().split()[1])
        n = int(take().split()[1])
        hmms = {}
        for _ in range(n):
            parts = take().split()
            if parts[0] != "PHONE" or len(parts) != 5:
                raise ParseError("bad PHONE header", pos)
            label, S, Kp, ex = parts[1], int(parts[2]), int(parts[3]), float(parts[4])
            pi = _parse_row(take(), S, pos)
            A = np.array([_parse_row(take(), S, pos) for _ in range(S)])
            B = np.array([_parse_row(take(), Kp, pos) for _ in range(S)])
            hmms[label] = DiscreteHmm(pi, A, B, ex)
        return cls(hmms, cb, cfg, spp)

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text("utf-8"))


def _r(x):
    return repr(float(x))


def _row(values):
    return " ".join(_r(v) for v in values)


def _parse_row(line, n, lineno):
    vals = [float(v) for v in line.split()]
    if len(vals) != n:
        raise ParseError(f"expected {n} values, got {len(vals)}", lineno)
    return np.array(vals)


def flat_start(phones, K, states_per_phone=3):
    """Identical Bakis phone HMMs with uniform emissions (no codebook yet)."""
    S = states_per_phone
    A = np.zeros((S, S))
    for i in range(S):
        A[i, i] = 0.5
        if i + 1 < S:
            A[i, i + 1] = 0.5
    pi = np.zeros(S)
    pi[0] = 1.0
    B = np.full((S, K), 1.0 / K)
    hmms = {p: DiscreteHmm(pi.copy(), A.copy(), B.copy(), 0.5) for p in phones}
    return AcousticModel(hmms, None, FrontendConfig(), S)


@dataclass
class _Accumulator:
    pi: np.ndarray
    A: np.ndarray
    B: np.ndarray
    exit: float = 0.0


def baum_welch_step(model, utterances):
    """One embedded re-estimation pass.

    ``utterances`` is a list of ``(symbols, phone_string)``. Each utterance is
    modelled by concatenating its phone HMMs; expected counts are mapped back
    onto the shared phone models. Returns ``(new_model, total_log_likelihood)``
    where the likelihood is that of the model passed in.
    """
    K = model.alphabet_size
    acc = {
        p: _Accumulator(np.zeros(h.num_states), np.zeros_like(h.A), np.zeros_like(h.B))
        for p, h in model.phone_hmms.items()
    }
    total = 0.0
    for obs, phones in utterances:
        phones = list(phones)
        if not phones:
            raise EmptyList("utterance has an empty phone string")
        o = _symbols(obs, K)
        hmms = [model.hmm(p) for p in phones]
        utt = concat_hmms(hmms)
        ll, alpha, scales = forward(utt, o)
        if not math.isfinite(ll):
            log.warning("skipping utterance with zero likelihood (%d frames, %d phones)",
                        o.size, len(phones))
            continue
        total += ll
        beta = backward(utt, o, scales)
        gamma = alpha * beta
        Bo = frame_emissions(utt, o)
        # xi summed over t: alpha_t(i) A_ij b_j(o_t+1) beta_t+1(j) / c_t+1
        xi = utt.A * (alpha[:-1].T @ (Bo[1:] * beta[1:] / scales[1:, None]))
        occ = np.zeros((K, utt.num_states))
        np.add.at(occ, o, gamma)
        off = 0
        for k, (p, h) in enumerate(zip(phones, hmms)):
            n = h.num_states
            a = acc[p]
            a.A += xi[off:off + n, off:off + n]
            a.B += occ[:, off:off + n].T
            if k == 0:
                a.pi += gamma[0, :n]
            if k + 1 < len(phones):
                nxt = off + n
                cross = xi[off + n - 1, nxt:nxt + hmms[k + 1].num_states]
                a.exit += cross.sum()
                acc[phones[k + 1]].pi += cross
            else:
                a.exit += gamma[-1, off + n - 1] if h.exit > 0 else 0.0
            off += n

    new = {}
    for p, h in model.phone_hmms.items():
        a = acc[p]
        pi = a.pi / a.pi.sum() if a.pi.sum() > 0 else h.pi.copy()
        A, exit_p = h.A.copy(), h.exit
        for i in range(h.num_states):
            out = a.A[i].sum() + (a.exit if i == h.num_states - 1 else 0.0)
            if out > 0:
                A[i] = a.A[i] / out
                if i == h.num_states - 1:
                    exit_p = a.exit / out
        B = h.B.copy()
        seen = a.B.sum(axis=1) > 0
        B[seen] = (a.B[seen] + EMISSION_EPS) / (
            a.B[seen].sum(axis=1, keepdims=True) + K * EMISSION_EPS)
        new[p] = DiscreteHmm(pi, A, B, exit_p)
    return replace(model, phone_hmms=new), total


@dataclass
class TrainReport:
    log_likelihoods: list[float] = field(default_factory=list)
    iterations_run: int = 0
    converged: bool = False


def prepare_training_data(manifest, lexicon, cfg, K, seed=0, silence=True):
    """Front end, codebook and quantized symbols for every manifest entry."""
    from .corpus import read_wav

    feats = [compute_mfcc(read_wav(manifest.resolve(e)), cfg) for e in manifest]
    codebook = lbg_train(feats, K, seed)
    utts = [
        (quantize(f, codebook), lexicon.transcript_phones(e.transcript, silence))
        for f, e in zip(feats, manifest)
    ]
    return codebook, utts


def train_acoustic(manifest, lexicon, cfg=None, K=256, max_iters=20, tol=1e-4,
                   states_per_phone=3, seed=0, silence=True, progress=None):
    """Train phone HMMs from a transcribed corpus; returns ``(model, report)``.

    Stops when the relative log-likelihood improvement drops below ``tol``
    or after ``max_iters`` Baum-Welch passes.
    """
    cfg = cfg or FrontendConfig()
    if len(manifest) == 0:
        raise EmptyList("manifest has no entries")
    codebook, utts = prepare_training_data(manifest, lexicon, cfg, K, seed, silence)
    phones = sorted({p for _, ph in utts for p in ph})
    model = flat_start(phones, codebook.K, states_per_phone)
    model = replace(model, codebook=codebook, frontend_cfg=cfg)
    report = TrainReport()
    for it in range(max_iters):
        model, ll = baum_welch_step(model, utts)
        report.log_likelihoods.append(ll)
        report.iterations_run = it + 1
        if progress is not None:
            progress(it + 1, ll)
        if it:
            prev = report.log_likelihoods[-2]
            if (ll - prev) / abs(prev) < tol:
                report.converged = True
                break
    return model, report

import itertools
import math

import numpy as np
import pytest

from digitasr.acoustic import (
    AcousticModel,
    DiscreteHmm,
    backward,
    baum_welch_step,
    concat_hmms,
    flat_start,
    forward,
    posteriors,
    train_acoustic,
)
from digitasr.corpus import SynthSpec, synth_corpus
from digitasr.errors import AlphabetMismatch, EmptyList, EmptyObservation, SymbolOutOfRange, UnknownPhone
from digitasr.frontend import Codebook, FrontendConfig
from digitasr.linguist import default_arabic_digits
from helpers import random_hmm, random_model
from oracles import brute_hmm_likelihood


def two_state():
    return DiscreteHmm([1.0, 0.0], [[0.5, 0.5], [0.0, 1.0]], [[0.9, 0.1], [0.2, 0.8]])


def test_forward_single_state_closed_form():
    h = DiscreteHmm([1.0], [[1.0]], [[0.3, 0.7]])
    ll, alpha, scales = forward(h, [1, 1])
    assert ll == pytest.approx(2 * math.log(0.7), abs=1e-15)
    np.testing.assert_allclose(alpha.sum(axis=1), 1.0)


def test_forward_two_state_enumeration():
    h = two_state()
    want = brute_hmm_likelihood(h.pi, h.A, h.B, [0, 1])
    assert want == pytest.approx(0.405, abs=1e-15)
    assert math.exp(forward(h, [0, 1])[0]) == pytest.approx(want, rel=1e-12)


def test_forward_errors():
    with pytest.raises(EmptyObservation):
        forward(two_state(), [])
    with pytest.raises(SymbolOutOfRange):
        forward(two_state(), [0, 2])


@pytest.mark.parametrize("seed", range(40))
def test_forward_matches_path_enumeration(seed):
    rng = np.random.default_rng(seed)
    S, K, T = rng.integers(1, 5), rng.integers(1, 4), rng.integers(1, 7)
    h = random_hmm(rng, S, K, segment=bool(seed % 2), zero_frac=0.2 * (seed % 3))
    obs = rng.integers(0, K, T)
    want = brute_hmm_likelihood(h.pi, h.A, h.B, obs, h.exit)
    got = forward(h, obs)[0]
    if want == 0.0:
        assert got == -math.inf
    else:
        assert math.exp(got) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_forward_normalizes_over_all_sequences(seed):
    rng = np.random.default_rng(100 + seed)
    S, K = rng.integers(1, 4), rng.integers(1, 4)
    h = random_hmm(rng, S, K)
    for L in range(1, 5):
        total = sum(math.exp(forward(h, o)[0]) for o in itertools.product(range(K), repeat=L))
        assert total == pytest.approx(1.0, abs=1e-9)


def test_backward_scaled_pair_identity_and_brute_posteriors():
    h = two_state()
    obs = [0, 1, 1, 0]
    ll, alpha, scales = forward(h, obs)
    beta = backward(h, obs, scales)
    np.testing.assert_allclose((alpha * beta).sum(axis=1), 1.0, atol=1e-12)
    assert beta[-1].tolist() == [1.0, 1.0]
    # brute-force posterior of state i at t
    P = brute_hmm_likelihood(h.pi, h.A, h.B, obs)
    for t in range(len(obs)):
        for i in range(2):
            mass = 0.0
            for path in itertools.product(range(2), repeat=len(obs)):
                if path[t] != i:
                    continue
                p = h.pi[path[0]] * h.B[path[0], obs[0]]
                for s in range(1, len(obs)):
                    p *= h.A[path[s - 1], path[s]] * h.B[path[s], obs[s]]
                mass += p
            assert alpha[t, i] * beta[t, i] == pytest.approx(mass / P, abs=1e-12)


def test_backward_identity_for_segment_models():
    rng = np.random.default_rng(7)
    h = random_hmm(rng, 4, 3, segment=True, bakis=True)
    obs = rng.integers(0, 3, 12)
    ll, gamma = posteriors(h, obs)
    np.testing.assert_allclose(gamma.sum(axis=1), 1.0, atol=1e-12)
    assert gamma[-1, -1] == pytest.approx(1.0)


def test_single_state_posterior_is_one():
    h = DiscreteHmm([1.0], [[0.5]], [[0.3, 0.7]], exit=0.5)
    _, gamma = posteriors(h, [0, 1, 1, 0])
    np.testing.assert_allclose(gamma, 1.0)


def test_no_underflow_on_long_sequences():
    rng = np.random.default_rng(8)
    h = random_hmm(rng, 3, 4, segment=True, bakis=True)
    obs = rng.integers(0, 4, 10_000)
    ll = forward(h, obs)[0]
    assert math.isfinite(ll) and ll < -1000


# -- concatenation ---------------------------------------------------------


def test_concat_identity_and_two_chain():
    h = two_state()
    assert concat_hmms([h]) is h
    a = DiscreteHmm([1.0], [[0.6]], [[0.5, 0.5]], exit=0.4)
    b = DiscreteHmm([1.0], [[0.6]], [[0.1, 0.9]], exit=0.4)
    c = concat_hmms([a, b])
    np.testing.assert_allclose(c.A, [[0.6, 0.4], [0.0, 0.6]])
    assert c.exit == pytest.approx(0.4)
    assert c.check_stochastic() and c.is_bakis()
    np.testing.assert_allclose(c.pi, [1.0, 0.0])


def test_concat_errors():
    with pytest.raises(EmptyList):
        concat_hmms([])
    with pytest.raises(AlphabetMismatch):
        concat_hmms([two_state(), DiscreteHmm([1.0], [[1.0]], [[1.0]])])


@pytest.mark.parametrize("seed", range(10))
def test_concat_likelihood_is_sum_over_split_points(seed):
    rng = np.random.default_rng(200 + seed)
    K = 3
    h1 = random_hmm(rng, rng.integers(1, 3), K, segment=True)
    h2 = random_hmm(rng, rng.integers(1, 3), K, segment=True)
    obs = rng.integers(0, K, rng.integers(2, 6))
    joint = math.exp(forward(concat_hmms([h1, h2]), obs)[0])
    parts = 0.0
    for cut in range(1, len(obs)):
        l1 = forward(h1, obs[:cut])[0]
        l2 = forward(h2, obs[cut:])[0]
        parts += math.exp(l1 + l2)
    assert joint == pytest.approx(parts, rel=1e-12)


def test_concat_of_bakis_phones_stays_bakis():
    rng = np.random.default_rng(3)
    hs = [random_hmm(rng, 3, 4, segment=True, bakis=True) for _ in range(4)]
    c = concat_hmms(hs)
    assert c.num_states == 12 and c.is_bakis() and c.check_stochastic()


# -- flat start and Baum-Welch --------------------------------------------


def test_flat_start_structure():
    m = flat_start(["A", "B"], K=8, states_per_phone=3)
    for h in m.phone_hmms.values():
        assert (h.B == 1 / 8).all()
        np.testing.assert_array_equal(h.A, [[0.5, 0.5, 0], [0, 0.5, 0.5], [0, 0, 0.5]])
        assert h.exit == 0.5 and h.pi.tolist() == [1, 0, 0]
        assert h.check_stochastic() and h.is_bakis()
    a, b = m.phone_hmms["A"], m.phone_hmms["B"]
    assert (a.A == b.A).all() and (a.B == b.B).all()


def test_baum_welch_single_state_count_ratio():
    m = flat_start(["P"], K=2, states_per_phone=1)
    new, ll = baum_welch_step(m, [([0, 0, 1], ["P"])])
    np.testing.assert_allclose(new.phone_hmms["P"].B[0], [2 / 3, 1 / 3], atol=1e-8)
    # pre-update likelihood: 0.5^3 emissions * 0.5^2 self-loops * 0.5 exit
    assert ll == pytest.approx(6 * math.log(0.5))
    # self-loop count 2, exit count 1
    assert new.phone_hmms["P"].A[0, 0] == pytest.approx(2 / 3)
    assert new.phone_hmms["P"].exit == pytest.approx(1 / 3)


def test_baum_welch_fixed_point():
    h = DiscreteHmm([1.0], [[0.9]], [[1.0, 0.0]], exit=0.1)
    m = AcousticModel({"P": h}, None, states_per_phone=1)
    new, _ = baum_welch_step(m, [([0] * 10, ["P"])])
    g = new.phone_hmms["P"]
    assert np.abs(g.B - h.B).max() <= 1e-9
    assert np.abs(g.A - h.A).max() <= 1e-9 and abs(g.exit - h.exit) <= 1e-9


def test_baum_welch_unknown_phone():
    m = flat_start(["P"], K=2, states_per_phone=1)
    with pytest.raises(UnknownPhone):
        baum_welch_step(m, [([0], ["Q"])])


@pytest.mark.parametrize("seed", range(10))
def test_baum_welch_monotone_and_stochastic(seed):
    rng = np.random.default_rng(300 + seed)
    phones = ["P", "Q", "R"]
    K, S = 4, 2
    m = random_model(rng, phones, S, K)
    data = []
    for _ in range(6):
        ph = list(rng.choice(phones, rng.integers(1, 4)))
        data.append((rng.integers(0, K, rng.integers(S * len(ph), 25)), ph))
    prev = -math.inf
    for _ in range(20):
        m, ll = baum_welch_step(m, data)
        assert ll >= prev - 1e-6
        prev = ll
        for h in m.phone_hmms.values():
            assert h.check_stochastic() and h.is_bakis()


def test_model_file_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    m = random_model(rng, ["SIL", "A", "B"], 3, 8)
    m.codebook = Codebook(rng.normal(size=(8, 26)))
    m.frontend_cfg = FrontendConfig(pre_emphasis=0.95, include_deltas=True)
    m.save(tmp_path / "m.aam")
    text = (tmp_path / "m.aam").read_text()
    assert text.startswith("AAM v1\n")
    back = AcousticModel.load(tmp_path / "m.aam")
    assert back.frontend_cfg == m.frontend_cfg
    assert back.states_per_phone == 3
    assert np.abs(back.codebook.codewords - m.codebook.codewords).max() <= 1e-12
    for p, h in m.phone_hmms.items():
        g = back.phone_hmms[p]
        for x, y in ((h.pi, g.pi), (h.A, g.A), (h.B, g.B)):
            assert np.abs(x - y).max() <= 1e-12
        assert abs(h.exit - g.exit) <= 1e-12
    assert back.to_text() == text


def test_train_small_corpus(tmp_path):
    _, lex = default_arabic_digits()
    spec = SynthSpec(("WAHID", "SIFR", "SITTA"), speakers=2, repetitions=2, seed=11)
    manifest = synth_corpus(spec, lex, tmp_path / "c")
    m1, rep = train_acoustic(manifest, lex, K=16, max_iters=8)
    lls = rep.log_likelihoods
    assert rep.iterations_run == len(lls) <= 8
    assert all(b >= a - 1e-6 for a, b in zip(lls, lls[1:]))
    assert set(m1.phones) == {"SIL", *lex.phones("WAHID"), *lex.phones("SIFR"), *lex.phones("SITTA")}
    m2, _ = train_acoustic(manifest, lex, K=16, max_iters=8)
    assert m1.to_text() == m2.to_text()


def test_train_empty_manifest():
    from digitasr.corpus import CorpusManifest

    with pytest.raises(EmptyList):
        train_acoustic(CorpusManifest(()), default_arabic_digits()[1])

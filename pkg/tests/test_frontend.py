import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from digitasr.corpus import AudioBuffer
from digitasr.errors import ConfigInvalid, DimensionMismatch, InsufficientData, InvalidK, TooShort
from digitasr.frontend import (
    LOG_FLOOR,
    Codebook,
    FeatureSequence,
    FrontendConfig,
    compute_mfcc,
    dct2,
    deltas,
    distortion,
    frame_count,
    frame_signal,
    hamming,
    idct2,
    lbg_train,
    log_mel_energies,
    mel,
    mel_filterbank,
    nearest_codeword,
    quantize,
)
from oracles import brute_two_means, dct_matrix, direct_dft_power, direct_frame_count


def sine(freq, seconds=1.0, sr=16000):
    t = np.arange(int(seconds * sr)) / sr
    return AudioBuffer(0.5 * np.sin(2 * np.pi * freq * t), sr)


def test_mel_values():
    assert mel(0) == 0
    assert mel(700) == pytest.approx(781.17, abs=0.01)
    f = np.sort(np.random.default_rng(0).uniform(0, 8000, 500))
    assert np.all(np.diff(mel(f)) > 0)


def test_frame_count_one_second():
    feats = compute_mfcc(sine(440))
    assert len(feats) == 98 == (16000 - 400) // 160 + 1
    assert feats.dim == 26


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 400), st.integers(1, 5000), st.data())
def test_frame_count_matches_direct_framing(frame, extra, data):
    shift = data.draw(st.integers(1, frame))
    length = frame + extra - 1
    assert frame_count(length, frame, shift) == direct_frame_count(length, frame, shift)
    assert frame_signal(np.arange(length, dtype=float), frame, shift).shape[0] == \
        direct_frame_count(length, frame, shift)


def test_too_short():
    with pytest.raises(TooShort):
        compute_mfcc(AudioBuffer(np.zeros(399), 16000))
    assert len(compute_mfcc(AudioBuffer(np.zeros(400), 16000))) == 1


def test_config_validation():
    with pytest.raises(ConfigInvalid):
        FrontendConfig(pre_emphasis=1.0).validate()
    with pytest.raises(ConfigInvalid):
        FrontendConfig(frame_shift_ms=30).validate()
    with pytest.raises(ConfigInvalid):
        FrontendConfig(num_cepstra=30).validate()
    with pytest.raises(ConfigInvalid):
        FrontendConfig(fft_size=500).validate()
    with pytest.raises(ConfigInvalid):
        FrontendConfig(fft_size=256).validate(16000)  # 400-sample frame


def test_zero_audio_gives_constant_frames():
    cfg = FrontendConfig(include_deltas=False)
    feats = compute_mfcc(AudioBuffer(np.zeros(8000), 16000), cfg).frames
    expected = dct_matrix(26)[:13] @ np.full(26, np.log(LOG_FLOOR))
    np.testing.assert_allclose(feats, np.tile(expected, (feats.shape[0], 1)), atol=1e-9)


def test_sine_peaks_in_its_filter():
    audio = sine(1000.0, 0.1)
    cfg = FrontendConfig()
    logmel = log_mel_energies(audio, cfg)
    weights, edges = mel_filterbank(26, 512, 16000)
    # independent route for one frame: direct DFT of the pre-emphasized, windowed frame
    x = audio.samples
    y = np.concatenate([[x[0]], x[1:] - 0.97 * x[:-1]])
    frame = y[160:560] * hamming(400)
    ref = int(np.argmax(weights @ direct_dft_power(frame, 512)))
    assert edges[ref] < 1000.0 < edges[ref + 2]
    assert np.all(logmel.argmax(axis=1) == ref)


def test_filterbank_shape_and_coverage():
    w, edges = mel_filterbank(26, 512, 16000)
    assert w.shape == (26, 257)
    assert (w >= 0).all()
    assert (w[:, 1:-1].sum(axis=0) > 0).all()
    np.testing.assert_allclose(np.diff(mel(edges)), mel(8000) / 27)


def test_dct_roundtrip_and_matrix_oracle():
    rng = np.random.default_rng(1)
    for n in (13, 26, 40):
        v = rng.normal(size=(5, n))
        np.testing.assert_allclose(dct2(v), v @ dct_matrix(n).T, atol=1e-12)
        assert np.abs(idct2(dct2(v)) - v).max() <= 1e-9


def test_deltas_edge_replication():
    c = np.array([[0.0], [2.0], [6.0]])
    np.testing.assert_allclose(deltas(c), [[1.0], [3.0], [2.0]])


def test_mfcc_finite_on_random_audio():
    rng = np.random.default_rng(2)
    audio = AudioBuffer(np.clip(rng.normal(0, 0.3, 4000), -1, 1), 16000)
    assert np.isfinite(compute_mfcc(audio).frames).all()


# -- vector quantization ---------------------------------------------------


def test_lbg_k1_is_mean():
    X = np.random.default_rng(3).normal(size=(50, 4))
    np.testing.assert_allclose(lbg_train([X], 1).codewords[0], X.mean(axis=0))


def test_lbg_two_clusters_match_bruteforce():
    X = np.vstack([np.zeros((100, 2)), np.full((100, 2), 10.0)])
    cost, cents = brute_two_means([(0, 0), (10, 10)], [100, 100])
    cb = lbg_train([X], 2)
    got = sorted(map(tuple, cb.codewords))
    want = sorted(map(tuple, cents))
    np.testing.assert_allclose(got, want, atol=1e-6)
    sym = quantize(X, cb).symbols
    assert len(set(sym[:100])) == 1 and len(set(sym[100:])) == 1
    assert sym[0] != sym[100]


def test_lbg_bigger_codebook_not_worse():
    X = np.random.default_rng(4).normal(size=(400, 3))
    assert distortion(X, lbg_train(X, 4)) <= distortion(X, lbg_train(X, 2))


def test_lbg_errors():
    X = np.zeros((3, 2))
    with pytest.raises(InvalidK):
        lbg_train(X, 3)
    with pytest.raises(InsufficientData):
        lbg_train(X, 4)


def test_lbg_zero_centroid_still_splits():
    X = np.array([[-1.0, 0.0], [1.0, 0.0]] * 10)
    cb = lbg_train(X, 2, seed=0)
    assert len({tuple(r) for r in cb.codewords}) == 2
    assert distortion(X, cb) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_lbg_distortion_monotone_within_levels(seed):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(loc=rng.uniform(-5, 5, 3), size=(60, 3)) for _ in range(5)])
    trace = []
    lbg_train(X, 16, seed, trace=trace)
    assert len(trace) == 5
    for level in trace:
        assert all(b <= a + 1e-12 for a, b in zip(level, level[1:]))


def test_quantize_ties_and_identity():
    cb = Codebook(np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [5.0, 5.0]]))
    assert quantize(np.array([[3.0, 0.0]]), cb).symbols.tolist() == [2]
    assert quantize(np.array([[2.0, 0.0]]), cb).symbols.tolist() == [1]
    assert quantize(cb.codewords, cb).symbols.tolist() == [0, 1, 2, 3]
    with pytest.raises(DimensionMismatch):
        quantize(np.zeros((1, 3)), cb)


def test_codebook_file_roundtrip(tmp_path):
    cb = Codebook(np.random.default_rng(5).normal(size=(8, 26)) * 1e3)
    cb.save(tmp_path / "cb.txt")
    assert (tmp_path / "cb.txt").read_text().startswith("CODEBOOK v1 8 26\n")
    back = Codebook.load(tmp_path / "cb.txt")
    assert np.abs(back.codewords - cb.codewords).max() <= 1e-12


def test_feature_sequence_wrapping():
    fs = FeatureSequence(np.zeros((4, 2)))
    cb = Codebook(np.zeros((1, 2)))
    assert quantize(fs, cb).symbols.tolist() == [0, 0, 0, 0]


@pytest.mark.parametrize("seed", range(5))
def test_nearest_codeword_matches_direct_search(seed):
    rng = np.random.default_rng(seed)
    C = rng.normal(size=(16, 6)) * 5
    C[3] = C[7]  # duplicate codeword: ties must go to index 3
    X = np.vstack([rng.normal(size=(300, 6)) * 5, C, (C[0] + C[1]) / 2])
    direct = ((X[:, None, :] - C[None]) ** 2).sum(axis=2)
    labels, d = nearest_codeword(X, C)
    assert labels.tolist() == direct.argmin(axis=1).tolist()
    np.testing.assert_allclose(d, direct.min(axis=1), rtol=1e-12, atol=1e-12)
    assert 7 not in labels.tolist()

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ecgauth import synth
from ecgauth.errors import ValidationError
from ecgauth.preprocess import (
    BaselineConfig,
    PreprocessConfig,
    SpectralCleanConfig,
    abnormal_bins,
    baseline_adjust,
    detect_flip,
    notch_mask,
    preprocess,
    remove_frequencies,
    remove_spectral_peaks,
    skew_scores,
    unflip,
)
from ecgauth.record import EcgRecord

from conftest import beat_record, rms


def _normal_equations_fit(y, order):
    """High-precision monomial least squares via the normal equations."""
    mpmath.mp.dps = 50
    n = len(y)
    xs = [mpmath.mpf(2 * i) / (n - 1) - 1 for i in range(n)]
    ata = mpmath.matrix(order + 1, order + 1)
    aty = mpmath.matrix(order + 1, 1)
    for x, v in zip(xs, y):
        powers = [x**k for k in range(order + 1)]
        for i in range(order + 1):
            aty[i] += powers[i] * mpmath.mpf(float(v))
            for j in range(order + 1):
                ata[i, j] += powers[i] * powers[j]
    coef = mpmath.lu_solve(ata, aty)
    return np.array([float(sum(coef[k] * x**k for k in range(order + 1))) for x in xs])


def test_baseline_matches_normal_equations_oracle():
    rng = np.random.default_rng(11)
    y = np.cumsum(rng.normal(size=150)) + 0.3 * np.sin(np.linspace(0, 9, 150))
    rec = EcgRecord("r", 100, y)
    _, fitted = baseline_adjust(rec, BaselineConfig(10))
    oracle = _normal_equations_fit(y, 10)
    assert np.max(np.abs(fitted - oracle)) <= 1e-9 * np.max(np.abs(y))


def test_pure_cubic_drift_removed():
    t = np.arange(8000) / 400
    drift = np.polynomial.polynomial.polyval(t, (0.5, -0.1, 0.02, 0.001))
    out, _ = baseline_adjust(EcgRecord("r", 400, drift), BaselineConfig(10))
    assert rms(out.samples) <= 1e-6 * rms(drift)


def test_constant_absorbed():
    out, fitted = baseline_adjust(EcgRecord("r", 400, np.full(500, 5.0)))
    assert np.max(np.abs(out.samples)) <= 1e-9
    assert np.allclose(fitted, 5.0)


def test_beats_plus_drift_recovered(thirty_beat_record):
    rec, _ = thirty_beat_record
    drifted, drift = synth.add_baseline_wander(rec, "polynomial", coefficients=(0.5, -0.1, 0.02, 0.001))
    out, _ = baseline_adjust(drifted)
    # the clean train has a nonzero mean that the fit also absorbs
    err = out.samples - (rec.samples - rec.samples.mean())
    assert rms(err) <= 0.05 * rms(drift)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(30, 300), elements=st.floats(-10, 10)),
       st.integers(0, 6),
       arrays(np.float64, 7, elements=st.floats(-1e-3, 1e-3)))
def test_baseline_least_squares_optimality(y, order, delta):
    rec = EcgRecord("r", 100, y)
    out, fitted = baseline_adjust(rec, BaselineConfig(order))
    x = np.linspace(-1, 1, y.size)
    nudged = fitted + np.polynomial.polynomial.polyval(x, delta[: order + 1])
    best = np.sum(out.samples**2)
    assert best <= np.sum((y - nudged) ** 2) * (1 + 1e-9) + 1e-12
    assert abs(out.samples.mean()) <= 1e-9 * max(1.0, np.abs(y).max())


def test_baseline_errors():
    with pytest.raises(ValidationError):
        baseline_adjust(EcgRecord("r", 400, np.zeros(11)), BaselineConfig(10))
    with pytest.raises(ValidationError):
        BaselineConfig(21)


def test_spectral_peaks_noop_on_broadband():
    y = np.random.default_rng(3).normal(0, 0.01, 4000)
    rec = EcgRecord("r", 400, y)
    out = remove_spectral_peaks(rec)
    assert np.max(np.abs(out.samples - y)) <= 1e-9


def test_spectral_peaks_remove_pli():
    rec, _ = beat_record(seed=1, jitter=0.1, noise=0.02)
    amp = rms(rec.samples) * np.sqrt(2)
    noisy = synth.add_powerline(rec, 50.0, amp)
    out = remove_spectral_peaks(noisy)
    k = 50 * len(rec) // 400
    before = abs(np.fft.fft(noisy.samples)[k])
    after = abs(np.fft.fft(out.samples)[k])
    assert 20 * np.log10(before / max(after, 1e-300)) >= 40
    assert rms(out.samples - rec.samples) <= 0.05 * rms(rec.samples)


def test_pure_60hz_tone_removed():
    t = np.arange(8000) / 400
    tone = np.sin(2 * np.pi * 60 * t)
    out = remove_spectral_peaks(EcgRecord("r", 400, tone))
    assert rms(out.samples) <= 1e-6 * rms(tone)


def test_notch_50hz_preserves_rest():
    rec, _ = beat_record(seed=2, jitter=0.1, noise=0.02)
    noisy = synth.add_powerline(rec, 50.0, 0.3)
    cfg = SpectralCleanConfig(notch_freqs_hz=(50,))
    out = remove_frequencies(noisy, cfg)
    k = 50 * len(rec) // 400
    assert abs(np.fft.fft(out.samples)[k]) <= 1e-9 * abs(np.fft.fft(noisy.samples)[k])
    assert rms(out.samples - rec.samples) <= 0.01 * rms(rec.samples)


def test_notch_1_and_50hz():
    t = np.arange(8000) / 400
    y = np.sin(2 * np.pi * 1 * t) + 0.5 * np.sin(2 * np.pi * 50 * t)
    out = remove_frequencies(EcgRecord("r", 400, y), SpectralCleanConfig(notch_freqs_hz=(1, 50)))
    spec_in, spec_out = np.abs(np.fft.fft(y)), np.abs(np.fft.fft(out.samples))
    for f in (1, 50):
        k = f * 20
        assert spec_out[k] ** 2 <= 1e-9 * spec_in[k] ** 2


def test_notch_empty_is_identity(thirty_beat_record):
    rec, _ = thirty_beat_record
    out = remove_frequencies(rec, SpectralCleanConfig())
    assert np.max(np.abs(out.samples - rec.samples)) <= 1e-9


def test_notch_above_nyquist_rejected(thirty_beat_record):
    rec, _ = thirty_beat_record
    with pytest.raises(ValidationError):
        remove_frequencies(rec, SpectralCleanConfig(notch_freqs_hz=(250,)))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.integers(64, 600), elements=st.floats(-5, 5)),
       st.lists(st.floats(1, 190), min_size=1, max_size=4))
def test_notch_idempotent_and_conserving(y, freqs):
    rec = EcgRecord("r", 400, y)
    cfg = SpectralCleanConfig(notch_freqs_hz=tuple(freqs))
    once = remove_frequencies(rec, cfg)
    twice = remove_frequencies(once, cfg)
    assert np.max(np.abs(once.samples - twice.samples)) <= 1e-9
    s_in, s_out = np.fft.fft(y), np.fft.fft(once.samples)
    kept = ~notch_mask(y.size, 400, cfg)
    scale = np.abs(s_in).max() + 1e-300
    assert np.max(np.abs(s_in[kept] - s_out[kept])) <= 1e-9 * scale


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.integers(64, 600), elements=st.floats(-5, 5)),
       st.floats(2, 200))
def test_spectral_peaks_conserve_other_bins(y, mult):
    rec = EcgRecord("r", 400, y)
    cfg = SpectralCleanConfig(peak_multiplier=mult)
    out = remove_spectral_peaks(rec, cfg)
    s_in, s_out = np.fft.fft(y), np.fft.fft(out.samples)
    zeroed = abnormal_bins(y, cfg)
    scale = np.abs(s_in).max() + 1e-300
    assert not zeroed[0]
    assert np.max(np.abs(s_in[~zeroed] - s_out[~zeroed])) <= 1e-9 * scale
    assert np.max(np.abs(s_out[zeroed]), initial=0.0) <= 1e-9 * scale


def test_skew_scores_oracle():
    y = np.array([0, 0, 5, 0, 0, 0, -5, 0], dtype=float)
    assert np.array_equal(skew_scores(y, 4), [5.0, -5.0])


def test_flip_detection(thirty_beat_record):
    rec, _ = thirty_beat_record
    assert detect_flip(rec) is False
    flipped = synth.flip_signal(rec)
    assert detect_flip(flipped) is True
    assert unflip(flipped).same_as(rec)
    assert unflip(rec) is rec
    with pytest.raises(ValidationError):
        detect_flip(rec, portion_s=30.0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32), st.floats(50, 120), st.booleans())
def test_unflip_idempotent(seed, bpm, flip):
    rec, _ = beat_record(seed=seed, bpm=bpm, jitter=0.1, noise=0.02, duration_s=10)
    if flip:
        rec = synth.flip_signal(rec)
    once = unflip(rec)
    assert unflip(once).same_as(once)
    assert not detect_flip(once)


def test_preprocess_pipeline_restores_upright_record(thirty_beat_record):
    rec, _ = thirty_beat_record
    dirty, _ = synth.add_baseline_wander(synth.flip_signal(rec), "sinusoid", frequency_hz=0.1)
    dirty = synth.add_powerline(dirty, 50, 0.2)
    cfg = PreprocessConfig(spectral=SpectralCleanConfig(notch_freqs_hz=(50,)))
    out = preprocess(dirty, cfg)
    assert np.corrcoef(out.samples, rec.samples)[0, 1] > 0.99


def test_spectral_config_validation():
    with pytest.raises(ValidationError):
        SpectralCleanConfig(peak_multiplier=1.0)
    with pytest.raises(ValidationError):
        SpectralCleanConfig(notch_halfwidth_hz=0)

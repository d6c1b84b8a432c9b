"""Deterministic synthetic ECG and additive artifact injectors.

Beats are sums of five Gaussian bumps (P, Q, R, S, T) whose R bump is the
largest by construction, so the true R-peak sample of every beat is known
exactly. Randomness comes from numpy's PCG64 bit generator seeded with a
64-bit integer, so identical specs reproduce bit-identical signals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .record import EcgRecord

WAVE_NAMES = ("P", "Q", "R", "S", "T")


@dataclass(frozen=True)
class Wave:
    amplitude_mv: float
    center_s: float
    width_s: float


@dataclass(frozen=True)
class BeatMorphology:
    """Five Gaussian bumps, centers given relative to the R-peak."""

    p: Wave = Wave(0.15, -0.20, 0.025)
    q: Wave = Wave(-0.12, -0.030, 0.010)
    r: Wave = Wave(1.00, 0.0, 0.010)
    s: Wave = Wave(-0.25, 0.030, 0.010)
    t: Wave = Wave(0.30, 0.25, 0.040)

    def __post_init__(self):
        waves = self.waves
        if self.r.amplitude_mv <= 0:
            raise ValidationError("R amplitude must be positive")
        if any(abs(w.amplitude_mv) >= self.r.amplitude_mv for w in waves if w is not self.r):
            raise ValidationError("R must have strictly the largest |amplitude|")
        if any(w.width_s <= 0 for w in waves):
            raise ValidationError("wave widths must be positive")
        centers = [w.center_s for w in waves]
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise ValidationError("wave centers must increase P<Q<R<S<T")

    @property
    def waves(self) -> tuple[Wave, ...]:
        return (self.p, self.q, self.r, self.s, self.t)

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        """One beat evaluated at times ``t`` relative to its R-peak."""
        out = np.zeros_like(t, dtype=float)
        for w in self.waves:
            out += w.amplitude_mv * np.exp(-0.5 * ((t - w.center_s) / w.width_s) ** 2)
        return out

    @property
    def extent_s(self) -> tuple[float, float]:
        """Support of the beat, out to five widths of the outer bumps."""
        lo = min(w.center_s - 5 * w.width_s for w in self.waves)
        hi = max(w.center_s + 5 * w.width_s for w in self.waves)
        return lo, hi


@dataclass(frozen=True)
class SynthSpec:
    fs_hz: float = 400.0
    duration_s: float = 20.0
    heart_rate_bpm: float = 90.0
    morphology: BeatMorphology = field(default_factory=BeatMorphology)
    rr_jitter_frac: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.fs_hz > 0:
            raise ValidationError("fs_hz must be positive")
        if not 20 < self.heart_rate_bpm < 240:
            raise ValidationError("heart_rate_bpm must lie in (20, 240)")
        if not 0 <= self.rr_jitter_frac < 1:
            raise ValidationError("rr_jitter_frac must lie in [0, 1)")
        if not self.duration_s > self.rr_s:
            raise ValidationError("duration must exceed one beat interval")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")

    @property
    def rr_s(self) -> float:
        return 60.0 / self.heart_rate_bpm


def rng_for(seed: int) -> np.random.Generator:
    """PCG64 stream for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def beat_times(spec: SynthSpec) -> np.ndarray:
    """R-peak times in seconds, snapped to the sample grid.

    The first beat sits half an interval into the record; each following
    interval is ``rr * (1 + jitter_k)`` with ``jitter_k`` uniform in
    ``[-rr_jitter_frac, rr_jitter_frac]``.
    """
    rng = rng_for(spec.seed)
    n_max = int(math.ceil(spec.duration_s / (spec.rr_s * (1 - spec.rr_jitter_frac)))) + 2
    jitter = rng.uniform(-spec.rr_jitter_frac, spec.rr_jitter_frac, size=n_max)
    intervals = spec.rr_s * (1.0 + jitter)
    times = spec.rr_s / 2 + np.concatenate(([0.0], np.cumsum(intervals[:-1])))
    times = times[times < spec.duration_s]
    # snapping makes the R-bump center an exact sample
    return np.round(times * spec.fs_hz) / spec.fs_hz


def generate(spec: SynthSpec, record_id: str = "synth", subject_id: str | None = None):
    """Render a beat train.

    Returns:
        ``(record, peaks)`` where ``peaks`` are the sample indices of each
        beat's R center inside the record. The baseline is exactly zero.
    """
    n = int(round(spec.duration_s * spec.fs_hz))
    t = np.arange(n) / spec.fs_hz
    signal = np.zeros(n)
    lo, hi = spec.morphology.extent_s
    times = beat_times(spec)
    for tk in times:
        i0 = max(0, int(math.floor((tk + lo) * spec.fs_hz)))
        i1 = min(n, int(math.ceil((tk + hi) * spec.fs_hz)) + 1)
        signal[i0:i1] += spec.morphology.evaluate(t[i0:i1] - tk)
    peaks = np.round(times * spec.fs_hz).astype(np.int64)
    peaks = peaks[peaks < n]
    record = EcgRecord(record_id=record_id, fs_hz=spec.fs_hz, samples=signal, subject_id=subject_id)
    return record, peaks


def add_baseline_wander(record: EcgRecord, kind: str = "sinusoid", *, frequency_hz: float = 0.2,
                        amplitude_mv: float = 0.3, phase_rad: float = 0.0,
                        coefficients: Sequence[float] = ()):
    """Add low-frequency drift.

    ``kind="sinusoid"`` adds ``amplitude*sin(2*pi*f*t + phase)`` with ``f < 0.5`` Hz.
    ``kind="polynomial"`` adds ``sum(c_k * t**k)`` over the time axis in
    seconds, degree at most 10.

    Returns:
        ``(record_with_drift, drift)``.
    """
    t = record.time_s
    if kind == "sinusoid":
        if not 0 <= frequency_hz < 0.5:
            raise ValidationError("baseline wander frequency must lie in [0, 0.5) Hz")
        drift = amplitude_mv * np.sin(2 * np.pi * frequency_hz * t + phase_rad)
    elif kind == "polynomial":
        coefficients = list(coefficients)
        if len(coefficients) - 1 > 10:
            raise ValidationError("polynomial drift degree must be <= 10")
        drift = np.polynomial.polynomial.polyval(t, coefficients) if coefficients else np.zeros_like(t)
    else:
        raise ValidationError(f"unknown drift kind {kind!r}")
    return record.with_samples(record.samples + drift), drift


def powerline(n: int, fs_hz: float, f0_hz: float, amplitude_mv: float, harmonics: int = 0) -> np.ndarray:
    """Interference waveform with harmonic amplitudes decaying as 1/(h+1)."""
    if harmonics < 0:
        raise ValidationError("harmonics must be >= 0")
    top = f0_hz * (harmonics + 1)
    if not 0 < f0_hz or not top < fs_hz / 2:
        raise ValidationError(f"harmonic at {top} Hz is not below Nyquist {fs_hz / 2} Hz")
    t = np.arange(n) / fs_hz
    out = np.zeros(n)
    for h in range(harmonics + 1):
        out += np.sin(2 * np.pi * f0_hz * (h + 1) * t) / (h + 1)
    return amplitude_mv * out


def add_powerline(record: EcgRecord, f0_hz: float = 50.0, amplitude_mv: float = 0.2,
                  harmonics: int = 0) -> EcgRecord:
    return record.with_samples(
        record.samples + powerline(len(record), record.fs_hz, f0_hz, amplitude_mv, harmonics)
    )


def flip_signal(record: EcgRecord) -> EcgRecord:
    """Negate every sample (electrode polarity reversal)."""
    return record.with_samples(-record.samples)


def add_gaussian_noise(record: EcgRecord, sigma_mv: float, seed: int) -> EcgRecord:
    if sigma_mv < 0:
        raise ValidationError("sigma_mv must be >= 0")
    if sigma_mv == 0:
        return record
    noise = rng_for(seed).normal(0.0, sigma_mv, size=len(record))
    return record.with_samples(record.samples + noise)


def subject_morphology(index: int) -> BeatMorphology:
    """A family of mutually distinct morphologies indexed by subject number."""
    rng = rng_for(1_000_003 + index)
    base = BeatMorphology()

    def vary(w: Wave, amp: float, center: float, width: float) -> Wave:
        return Wave(
            w.amplitude_mv * (1 + rng.uniform(-amp, amp)),
            w.center_s + rng.uniform(-center, center),
            w.width_s * (1 + rng.uniform(-width, width)),
        )

    return BeatMorphology(
        p=vary(base.p, 0.5, 0.03, 0.3),
        q=vary(base.q, 0.5, 0.005, 0.3),
        r=Wave(1.0 + rng.uniform(-0.3, 0.3), 0.0, base.r.width_s * (1 + rng.uniform(-0.3, 0.3))),
        s=vary(base.s, 0.5, 0.005, 0.3),
        t=vary(base.t, 0.5, 0.05, 0.3),
    )


def add_noise_bursts(record: EcgRecord, sigma_mv: float, fraction: float = 0.3,
                     n_bursts: int = 3, seed: int = 0) -> EcgRecord:
    """Add heavy white noise confined to ``n_bursts`` episodes.

    One burst is placed at a random offset inside each of ``n_bursts`` equal
    thirds (quarters, ...) of the record; together they cover ``fraction``
    of the samples. Models intermittent electrode or amplifier saturation.
    """
    if sigma_mv < 0:
        raise ValidationError("sigma_mv must be >= 0")
    if not 0 < fraction < 1 or n_bursts < 1:
        raise ValidationError("fraction must lie in (0, 1) and n_bursts >= 1")
    rng = rng_for(seed)
    n = len(record)
    burst_len = int(fraction * n / n_bursts)
    mask = np.zeros(n, dtype=bool)
    for k in range(n_bursts):
        lo, hi = k * n // n_bursts, (k + 1) * n // n_bursts - burst_len
        start = int(rng.integers(lo, max(lo, hi) + 1))
        mask[start:start + burst_len] = True
    noise = rng.normal(0.0, sigma_mv, size=n) * mask
    return record.with_samples(record.samples + noise)


QUALITY_DEMO_IDS = ("101", "102", "103", "104", "105", "201", "202", "203", "204", "205")


def quality_demo_corpus(seed: int = 7, noisy_id: str = "105", fs_hz: float = 400.0,
                        duration_s: float = 20.0) -> list[EcgRecord]:
    """Ten 20 s records, nine clean and one with heavy noise bursts.

    Clean records carry 0.01 mV white noise and 5% RR jitter; the noisy one
    additionally gets 0.1 mV bursts over 30% of its length.
    """
    records = []
    for k, rid in enumerate(QUALITY_DEMO_IDS):
        spec = SynthSpec(
            fs_hz=fs_hz,
            duration_s=duration_s,
            heart_rate_bpm=60.0 + 3 * k,
            morphology=subject_morphology(k),
            rr_jitter_frac=0.05,
            seed=seed * 1000 + k,
        )
        rec, _ = generate(spec, record_id=rid, subject_id=rid)
        rec = add_gaussian_noise(rec, 0.01, seed * 1000 + 500 + k)
        if rid == noisy_id:
            rec = add_noise_bursts(rec, 0.1, 0.3, 3, seed * 1000 + 900)
        records.append(rec)
    return records

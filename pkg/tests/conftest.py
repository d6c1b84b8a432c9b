import numpy as np
import pytest

from ecgauth import synth
from ecgauth.record import EcgRecord


def rms(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x**2)))


def beat_record(seed=0, bpm=90.0, duration_s=20.0, jitter=0.0, noise=0.0, fs_hz=400.0,
                morphology=None, record_id="r", subject_id=None):
    spec = synth.SynthSpec(
        fs_hz=fs_hz,
        duration_s=duration_s,
        heart_rate_bpm=bpm,
        morphology=morphology or synth.BeatMorphology(),
        rr_jitter_frac=jitter,
        seed=seed,
    )
    rec, peaks = synth.generate(spec, record_id=record_id, subject_id=subject_id)
    if noise:
        rec = synth.add_gaussian_noise(rec, noise, seed + 10_000)
    return rec, peaks


@pytest.fixture
def thirty_beat_record():
    """20 s at 400 Hz and 90 bpm: 30 beats, the last one 0.33 s before the end."""
    return beat_record()


@pytest.fixture
def make_record():
    def _make(samples, fs_hz=400.0, record_id="r", subject_id=None):
        return EcgRecord(record_id, fs_hz, np.asarray(samples, dtype=float), subject_id)
    return _make


def subject_dataset(subject: int, duration_s: float, seed: int, sigma_mv: float = 0.02):
    """Pre-processed 0.6 s slices for synthetic subject ``subject``."""
    from ecgauth.preprocess import preprocess
    from ecgauth.slicing import detect_r_peaks, slice_record

    rec, _ = beat_record(
        seed=seed,
        bpm=60.0 + 4 * subject,
        duration_s=duration_s,
        jitter=0.05,
        morphology=synth.subject_morphology(subject),
        subject_id=f"S{subject}",
    )
    rec = synth.add_gaussian_noise(rec, sigma_mv, seed + 99_991)
    clean = preprocess(rec)
    return slice_record(clean, detect_r_peaks(clean))


ACCEPTANCE_RESULTS: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        name, ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {name}: {detail}")

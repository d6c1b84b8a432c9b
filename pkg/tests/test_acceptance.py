"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that is printed in the terminal
summary, then asserts it.
"""

import math
import time

import mpmath
import numpy as np

from ecgauth import synth
from ecgauth.auth import UNKNOWN, AuthConfig, ReferenceDb, authenticate, enroll
from ecgauth.preprocess import (
    SpectralCleanConfig,
    baseline_adjust,
    detect_flip,
    preprocess,
    remove_frequencies,
    remove_spectral_peaks,
    unflip,
)
from ecgauth.quality import (
    QualityConfig,
    apr,
    apu,
    control_limits,
    maer,
    mse,
    quality_gate,
    sigma_of_b,
    slice_ranges,
)
from ecgauth.record import EcgRecord, SliceWindow, UseCaseCategory as U
from ecgauth.slicing import detect_r_peaks, slice_record

from conftest import ACCEPTANCE_RESULTS, beat_record, rms, subject_dataset


def verdict(n, name, ok, detail):
    ACCEPTANCE_RESULTS[n] = (name, bool(ok), detail)
    assert ok, f"criterion {n} ({name}) failed: {detail}"


def _pipeline(record, window=None):
    clean = preprocess(record)
    peaks = detect_r_peaks(clean)
    return clean, peaks, slice_record(clean, peaks, window)


def test_1_reference_record_structure():
    start = time.perf_counter()
    rec, _ = beat_record()  # 400 Hz, 20 s, 90 bpm
    _, peaks, ds = _pipeline(rec, SliceWindow(0, 1))
    report = quality_gate([rec], QualityConfig(window=SliceWindow(0, 1)))
    elapsed = time.perf_counter() - start
    r = report.records[0]
    ok = (len(peaks) == 30 and ds.n_slices == 29 and r.n_peaks == 30 and r.n_slices == 29
          and elapsed < 1.0)
    verdict(1, "reference record structure", ok,
            f"peaks={len(peaks)} slices={ds.n_slices} gate={r.n_peaks}/{r.n_slices} in {elapsed:.3f} s")


# independent oracles: plain Python loops with exact summation

def _mse_oracle(y, ref):
    return math.fsum((a - b) ** 2 for a, b in zip(y, ref)) / len(y)


def _maer_oracle(y, ref, eps):
    return math.fsum(abs(a - b) / (abs(b) + eps) for a, b in zip(y, ref)) / len(y)


def _sigma_oracle(b):
    mpmath.mp.dps = 40
    return float(mpmath.ncdf(b) - mpmath.mpf(1) / 2)


def _limits_oracle(ranges, b):
    rbar = math.fsum(ranges) / len(ranges)
    s = _sigma_oracle(b)
    return rbar, rbar * (1 + s), max(0.0, rbar * (1 - s))


def _rel_close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(abs(a), abs(b)) or (a == 0 and b == 0)


def test_2_metric_oracles():
    rng = np.random.default_rng(2024)
    failures = []
    for i in range(100):
        n = int(rng.integers(1, 65))
        ref = rng.normal(0, 1, n) * rng.choice([1e-3, 1, 1e3])
        y = ref + rng.normal(0, 0.5, n) * np.abs(ref).mean()
        eps = float(10.0 ** rng.uniform(-12, -3))
        b = float(rng.uniform(0.1, 6))
        ranges = np.abs(rng.normal(1, 0.5, n)) * 10.0 ** rng.uniform(-3, 4)
        ucl_probe = float(rng.choice(ranges)) * rng.uniform(0.8, 1.2)

        rbar, ucl, lcl = _limits_oracle(ranges.tolist(), b)
        lim = control_limits(ranges, b)
        count = sum(1 for r in ranges.tolist() if r <= ucl_probe) / n
        pairs = {
            "mse": (mse(y, ref), _mse_oracle(y.tolist(), ref.tolist())),
            "maer": (maer(y, ref, eps), _maer_oracle(y.tolist(), ref.tolist(), eps)),
            "sigma": (sigma_of_b(b), _sigma_oracle(b)),
            "rbar": (lim.r_bar, rbar),
            "ucl": (lim.ucl, ucl),
            "lcl": (lim.lcl, lcl),
            "apr": (apr(ranges, ucl_probe), count),
            "apu": (apu(apr(ranges, ucl_probe), ucl_probe), count / ucl_probe),
        }
        failures += [(i, k) for k, (got, want) in pairs.items() if not _rel_close(got, want)]
    s3 = sigma_of_b(3)
    ok = not failures and abs(s3 - 0.49865010) <= 1e-7
    verdict(2, "metric oracle equivalence", ok,
            f"{800 - len(failures)}/800 values within 1e-9 rel, sigma(3)={s3:.10f}")


def test_3_baseline_removal():
    coefs = (0.5, -0.1, 0.02, 0.001)
    worst = 0.0
    for seed in range(5):
        rec, _ = beat_record(seed=seed, jitter=0.05)
        drifted, drift = synth.add_baseline_wander(rec, "polynomial", coefficients=coefs)
        out, _ = baseline_adjust(drifted)
        # compared with the raw clean train, so the mean it loses counts as error too
        worst = max(worst, rms(out.samples - rec.samples) / rms(drift))
    t = np.arange(8000) / 400
    pure = np.polynomial.polynomial.polyval(t, coefs)
    pure_out, _ = baseline_adjust(EcgRecord("p", 400, pure))
    pure_ratio = rms(pure_out.samples) / rms(pure)
    ok = worst <= 0.05 and pure_ratio <= 1e-6
    verdict(3, "baseline removal", ok,
            f"residual drift {worst:.2e} of drift RMS, pure polynomial {pure_ratio:.2e} of input RMS")


def _bin(x, f, fs=400.0):
    return abs(np.fft.fft(x)[int(round(f * len(x) / fs))])


def test_4_powerline_removal():
    worst_db, worst_err = np.inf, 0.0
    for seed in range(5):
        rec, _ = beat_record(seed=seed, jitter=0.1, noise=0.02)
        clean_rms = rms(rec.samples)
        # single 50 Hz tone at the clean signal's RMS, removed as an abnormal peak
        noisy = synth.add_powerline(rec, 50.0, clean_rms * math.sqrt(2))
        out = remove_spectral_peaks(noisy)
        worst_db = min(worst_db, 20 * math.log10(_bin(noisy.samples, 50) / max(_bin(out.samples, 50), 1e-300)))
        worst_err = max(worst_err, rms(out.samples - rec.samples) / clean_rms)
        # 60 Hz plus two harmonics at the same total RMS, removed by named notches
        unit = synth.powerline(len(rec), 400.0, 60.0, 1.0, 2)
        noisy = rec.with_samples(rec.samples + unit * clean_rms / rms(unit))
        out = remove_frequencies(noisy, SpectralCleanConfig(notch_freqs_hz=(60, 120, 180)))
        for f in (60, 120, 180):
            worst_db = min(worst_db, 20 * math.log10(_bin(noisy.samples, f) / max(_bin(out.samples, f), 1e-300)))
        worst_err = max(worst_err, rms(out.samples - rec.samples) / clean_rms)
    ok = worst_db >= 40 and worst_err <= 0.05
    verdict(4, "powerline removal", ok,
            f"worst attenuation {min(worst_db, 999):.1f} dB, worst RMS error {worst_err:.2%} of clean")


def _flip_corpus():
    records = []
    for k in range(50):
        rec, _ = beat_record(
            seed=500 + k,
            bpm=55 + (k * 7) % 60,
            jitter=0.1,
            noise=0.02,
            morphology=synth.subject_morphology(k % 10),
            record_id=f"f{k}",
        )
        rec, _ = synth.add_baseline_wander(rec, "sinusoid", frequency_hz=0.05 + 0.005 * (k % 10),
                                           amplitude_mv=0.3)
        flipped = k % 2 == 1
        records.append((synth.flip_signal(rec) if flipped else rec, flipped))
    return records


def test_5_flip_handling():
    corpus = _flip_corpus()
    correct = sum(detect_flip(rec) == truth for rec, truth in corpus)
    involution = all(np.array_equal(synth.flip_signal(synth.flip_signal(r)).samples, r.samples) for r, _ in corpus)
    idempotent = all(unflip(unflip(r)).same_as(unflip(r)) for r, _ in corpus[:10])
    ok = correct == len(corpus) and involution and idempotent
    verdict(5, "flip handling", ok,
            f"{correct}/{len(corpus)} detected, flip∘flip exact={involution}, unflip idempotent={idempotent}")


def test_6_rpeak_accuracy():
    bad = []
    worst_ms = 0.0
    n_records = 0
    for corpus in range(20):
        for k in range(5):
            seed = 10_000 * (corpus + 1) + k
            rec, truth = beat_record(seed=seed, bpm=60 + 10 * k, jitter=0.1, noise=0.02,
                                     morphology=synth.subject_morphology(k))
            peaks = detect_r_peaks(rec)
            n_records += 1
            if len(peaks) != len(truth):
                bad.append(seed)
                continue
            err = np.max(np.abs(peaks - truth)) / rec.fs_hz * 1e3
            worst_ms = max(worst_ms, err)
            if err > 20:
                bad.append(seed)
    ok = not bad
    verdict(6, "R-peak accuracy", ok,
            f"{n_records - len(bad)}/{n_records} records exact count, worst offset {worst_ms:.1f} ms")


def test_7_quality_gate_demo():
    records = synth.quality_demo_corpus()
    report = quality_gate(records)
    decisions = {r.record_id: r.accepted for r in report.records}
    rng = np.random.default_rng(7)
    invariant = all(quality_gate([rec]).records[0].accepted == decisions[rec.record_id] for rec in records)
    for _ in range(5):
        subset = [records[i] for i in sorted(rng.choice(10, size=4, replace=False))]
        sub = quality_gate(subset)
        invariant &= all(r.accepted == decisions[r.record_id] for r in sub.records)
    ok = report.rejected == ["105"] and len(report.accepted) == 9 and invariant
    apr_105 = report.get("105").apr
    min_clean = min(r.apr for r in report.records if r.record_id != "105")
    verdict(7, "quality-gate demo", ok,
            f"rejected={report.rejected}, APR 105={apr_105:.3f}, min clean APR={min_clean:.3f}, "
            f"batch invariant={invariant}")


def test_8_authentication_benchmark():
    start = time.perf_counter()
    runs = 20
    hos, unknown_rejected, genuine, impostor = [], [], [], []
    for run in range(runs):
        base = 1000 * run
        db = ReferenceDb.from_templates([enroll(subject_dataset(s, 60, base + s), f"S{s}") for s in range(5)])
        for s in range(5):
            test = subject_dataset(s, 20, base + 500 + s)
            hos.append(authenticate(test, db, U.HOS).predicted_id == f"S{s}")
            for sid in db.subject_ids:
                accepted = authenticate(test, db, U.WD, claimed=sid).accepted
                (genuine if sid == f"S{s}" else impostor).append(accepted)
        outsider = subject_dataset(5, 20, base + 777)
        unknown_rejected.append(authenticate(outsider, db, U.SCK).predicted_id == UNKNOWN)
    elapsed = time.perf_counter() - start
    acc, rej = np.mean(hos), np.mean(unknown_rejected)
    gen, imp = np.mean(genuine), np.mean(impostor)
    ok = acc >= 0.95 and rej >= 0.90 and gen >= 0.90 and imp <= 0.10 and elapsed < 60
    verdict(8, "authentication benchmark", ok,
            f"HOS acc={acc:.3f}, SCK unknown rejected={rej:.2f}, WD genuine={gen:.3f} "
            f"impostor={imp:.3f}, {runs} runs in {elapsed:.1f} s")


def _scaled_run(records, train, tests, factor):
    eps = 1e-9 * factor
    scale = lambda r: r.with_samples(r.samples * factor)
    out = {}
    for rec in records:
        clean, peaks, ds = _pipeline(scale(rec))
        tpl = ds.slices.mean(axis=0)
        ranges = slice_ranges(ds, tpl, "maer", eps)
        lim = control_limits(ranges)
        out[rec.record_id] = (peaks, ds.slices.shape, ranges, apr(ranges, lim.ucl))
    cfg = QualityConfig(epsilon=eps)
    gate = {r.record_id: (r.apr, r.accepted) for r in quality_gate([scale(r) for r in records], cfg).records}
    acfg = AuthConfig(epsilon=eps)
    db = ReferenceDb.from_templates([enroll(ds.scaled(factor), sid, acfg) for sid, ds in train], acfg)
    ids = [authenticate(ds.scaled(factor), db, U.SCK, cfg=acfg).predicted_id for ds in tests]
    return out, gate, ids


def test_9_scale_invariance():
    records = synth.quality_demo_corpus()[:4]
    train = [(f"S{s}", subject_dataset(s, 60, 40 + s)) for s in range(3)]
    tests = [subject_dataset(s, 20, 80 + s) for s in range(4)]
    base = _scaled_run(records, train, tests, 1.0)

    def compare(factor, exact):
        out, gate, ids = _scaled_run(records, train, tests, factor)
        same = ids == base[2] and gate == base[1]
        worst = 0.0
        for rid, (peaks, shape, ranges, a) in out.items():
            p0, s0, r0, a0 = base[0][rid]
            same &= np.array_equal(peaks, p0) and shape == s0 and a == a0
            if exact:
                same &= np.array_equal(ranges, r0)
            worst = max(worst, float(np.max(np.abs(ranges - r0) / r0)))
        return same and worst <= (0.0 if exact else 1e-9), worst

    ok_pow2, dev_pow2 = compare(1024.0, exact=True)
    ok_1000, dev_1000 = compare(1000.0, exact=False)
    verdict(9, "scale invariance", ok_pow2 and ok_1000,
            f"x1024 bit-exact={ok_pow2} (max rel dev {dev_pow2:.1e}); "
            f"x1000 decisions exact, MAER max rel dev {dev_1000:.1e}")

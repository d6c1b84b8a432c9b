"""Signal enhancement applied before slicing.

Three independent transforms: polynomial baseline adjustment, removal of
powerline interference in the Fourier domain (either automatically picked
abnormal spectral peaks or a list of named frequencies), and polarity
(flip) detection and correction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .record import EcgRecord, to_index
from .synth import flip_signal

log = logging.getLogger(__name__)

MAX_POLY_ORDER = 20


@dataclass(frozen=True)
class BaselineConfig:
    poly_order: int = 10

    def __post_init__(self):
        if not 0 <= int(self.poly_order) <= MAX_POLY_ORDER:
            raise ValidationError(f"poly_order must lie in [0, {MAX_POLY_ORDER}]")


@dataclass(frozen=True)
class SpectralCleanConfig:
    peak_multiplier: float = 50.0
    notch_freqs_hz: tuple = field(default_factory=tuple)
    notch_halfwidth_hz: float = 0.5
    protect_dc: bool = True

    def __post_init__(self):
        if not self.peak_multiplier > 1:
            raise ValidationError("peak_multiplier must exceed 1")
        if not self.notch_halfwidth_hz > 0:
            raise ValidationError("notch_halfwidth_hz must be positive")
        object.__setattr__(self, "notch_freqs_hz", tuple(float(f) for f in self.notch_freqs_hz))


def baseline_adjust(record: EcgRecord, cfg: BaselineConfig = BaselineConfig()):
    """Subtract a least-squares polynomial fit of the record.

    The fit is solved in a Legendre basis over the time axis mapped to
    [-1, 1]; the fitted curve spans the same space as monomials of the
    same degree, but the design matrix stays well conditioned at order 10.

    Returns:
        ``(adjusted_record, fitted_curve)``.
    """
    y = record.samples
    order = int(cfg.poly_order)
    if y.size <= order + 1:
        raise ValidationError(f"need more than {order + 1} samples for an order-{order} fit")
    x = np.linspace(-1.0, 1.0, y.size)
    design = np.polynomial.legendre.legvander(x, order)
    coef, _, rank, sv = np.linalg.lstsq(design, y, rcond=None)
    if rank < order + 1:
        raise NumericalError(
            f"rank-deficient baseline fit: rank {rank} < {order + 1}, "
            f"singular values {sv.min():.3g}..{sv.max():.3g}"
        )
    fitted = design @ coef
    return record.with_samples(y - fitted), fitted


def _check_length(record: EcgRecord):
    if len(record) < 16:
        raise ValidationError("spectral cleaning needs at least 16 samples")


def _inverse(spectrum: np.ndarray, scale: float) -> np.ndarray:
    out = np.fft.ifft(spectrum)
    residue = np.max(np.abs(out.imag)) if out.size else 0.0
    if residue > 1e-9 * max(scale, 1.0):
        raise NumericalError(f"inverse transform left imaginary residue {residue:.3g}")
    return out.real


def _symmetric(mask: np.ndarray) -> np.ndarray:
    # bin k pairs with bin N-k
    return mask | np.roll(mask[::-1], 1)


def abnormal_bins(samples: np.ndarray, cfg: SpectralCleanConfig) -> np.ndarray:
    """Boolean mask of bins whose magnitude exceeds ``peak_multiplier`` times
    the mean non-DC magnitude."""
    mag = np.abs(np.fft.fft(samples))
    threshold = cfg.peak_multiplier * mag[1:].mean()
    mask = mag > threshold
    if cfg.protect_dc:
        mask[0] = False
    return _symmetric(mask)


def remove_spectral_peaks(record: EcgRecord, cfg: SpectralCleanConfig = SpectralCleanConfig()) -> EcgRecord:
    """Zero abnormally high spectral bins (and their conjugate partners)."""
    _check_length(record)
    spectrum = np.fft.fft(record.samples)
    mask = abnormal_bins(record.samples, cfg)
    if not mask.any():
        return record
    log.debug("removing %d abnormal bins", int(mask.sum()))
    spectrum[mask] = 0.0
    return record.with_samples(_inverse(spectrum, np.abs(record.samples).max()))


def notch_mask(n: int, fs_hz: float, cfg: SpectralCleanConfig) -> np.ndarray:
    freqs = np.abs(np.fft.fftfreq(n, d=1.0 / fs_hz))
    mask = np.zeros(n, dtype=bool)
    for f0 in cfg.notch_freqs_hz:
        if not 0 < f0 < fs_hz / 2:
            raise ValidationError(f"notch frequency {f0} Hz must lie in (0, {fs_hz / 2}) Hz")
        mask |= np.abs(freqs - f0) <= cfg.notch_halfwidth_hz
    if cfg.protect_dc:
        mask[0] = False
    return mask


def remove_frequencies(record: EcgRecord, cfg: SpectralCleanConfig) -> EcgRecord:
    """Zero all bins within ``notch_halfwidth_hz`` of each named frequency."""
    _check_length(record)
    mask = notch_mask(len(record), record.fs_hz, cfg)
    if not mask.any():
        return record
    spectrum = np.fft.fft(record.samples)
    spectrum[mask] = 0.0
    return record.with_samples(_inverse(spectrum, np.abs(record.samples).max()))


def skew_scores(samples: np.ndarray, portion_len: int) -> np.ndarray:
    """``(max - median) - (median - min)`` over consecutive whole portions."""
    n_portions = samples.size // portion_len
    blocks = samples[: n_portions * portion_len].reshape(n_portions, portion_len)
    med = np.median(blocks, axis=1)
    return (blocks.max(axis=1) - med) - (med - blocks.min(axis=1))


def detect_flip(record: EcgRecord, portion_s: float = 2.0,
                baseline: BaselineConfig = BaselineConfig()) -> bool:
    """True when the record looks polarity-reversed.

    The record is baseline-adjusted first, then cut into whole portions of
    ``portion_s`` seconds. An upright ECG has its R-peaks far above the
    portion median, so the skew score is positive; the record counts as
    flipped when a strict majority of portions score negative.
    """
    portion_len = to_index(portion_s, record.fs_hz)
    if portion_s <= 0 or portion_len < 1 or portion_len > len(record):
        raise ValidationError(
            f"record of {record.duration_s:g} s is shorter than one {portion_s:g} s portion"
        )
    adjusted, _ = baseline_adjust(record, baseline)
    scores = skew_scores(adjusted.samples, portion_len)
    return int(np.count_nonzero(scores < 0)) * 2 > scores.size


def unflip(record: EcgRecord, portion_s: float = 2.0,
           baseline: BaselineConfig = BaselineConfig()) -> EcgRecord:
    """Return the record upright: flipped back if detected flipped, else unchanged."""
    if detect_flip(record, portion_s, baseline):
        return flip_signal(record)
    return record


@dataclass(frozen=True)
class PreprocessConfig:
    """Which enhancement steps run, and with what settings.

    Abnormal-peak removal is off by default: a strongly periodic beat train
    has harmonic lines far above the mean magnitude, and zeroing them
    destroys the beats. Named notches run whenever the list is non-empty.
    """

    baseline: BaselineConfig = BaselineConfig()
    spectral: SpectralCleanConfig = SpectralCleanConfig()
    remove_peaks: bool = False
    flip_check: bool = True
    portion_s: float = 2.0


def preprocess(record: EcgRecord, cfg: PreprocessConfig = PreprocessConfig()) -> EcgRecord:
    """Baseline adjustment, spectral cleaning, then flip correction."""
    out, _ = baseline_adjust(record, cfg.baseline)
    if cfg.spectral.notch_freqs_hz:
        out = remove_frequencies(out, cfg.spectral)
    if cfg.remove_peaks:
        out = remove_spectral_peaks(out, cfg.spectral)
    if cfg.flip_check:
        out = unflip(out, cfg.portion_s, cfg.baseline)
    return out

"""Data-quality metrics and the record-level quality gate.

The range metric is either MSE or MAER (mean absolute error rate, the
absolute error divided by the reference value). Ranges of a set of slices
give R-chart control limits ``UCL = R(1 + s)`` and ``LCL = max(0, R(1 - s))``
where ``R`` is the mean range and ``s = Phi(b) - Phi(0)`` for sigma level
``b``. APR is the fraction of ranges at or below UCL, APU is APR / UCL.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import NumericalError, ValidationError
from .preprocess import PreprocessConfig, preprocess
from .record import EcgRecord, SliceWindow, TimeSlicedDataset, as_samples
from .slicing import RPeakConfig, default_window, detect_r_peaks, slice_record

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-9


class Metric(str, enum.Enum):
    MAER = "maer"
    MSE = "mse"

    @classmethod
    def parse(cls, text) -> "Metric":
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).lower())
        except ValueError:
            raise ValidationError(f"unknown metric {text!r}; expected maer or mse") from None


def _pair(y, ref):
    y = as_samples(y, "y")
    ref = as_samples(ref, "ref")
    if y.shape != ref.shape:
        raise ValidationError(f"length mismatch: {y.size} vs {ref.size}")
    return y, ref


def mse(y, ref) -> float:
    y, ref = _pair(y, ref)
    return float(np.mean((y - ref) ** 2))


def maer(y, ref, epsilon: float = DEFAULT_EPSILON, signed: bool = False) -> float:
    """Mean absolute error rate of ``y`` against reference values ``ref``.

    Each term is ``|y - ref| / (|ref| + epsilon)``. With ``signed=True`` the
    denominator is ``ref + epsilon`` as written in the original formula; a
    negative denominator is then passed through with a warning and an exact
    zero raises :class:`NumericalError`. The magnitude form is the default
    because zero-mean ECG slices always contain negative reference values.
    """
    y, ref = _pair(y, ref)
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    if signed:
        denom = ref + epsilon
        if np.any(denom == 0):
            raise NumericalError("MAER denominator is exactly zero")
        if np.any(denom < 0):
            log.warning("MAER reference has negative values; terms go negative")
    else:
        denom = np.abs(ref) + epsilon
    return float(np.mean(np.abs(y - ref) / denom))


def sigma_of_b(b: float) -> float:
    """``Phi(b) - Phi(0)`` for the standard normal CDF ``Phi``."""
    if not b > 0:
        raise ValidationError(f"sigma level must be positive, got {b}")
    if math.isinf(b):
        return 0.5
    return 0.5 * math.erf(b / math.sqrt(2.0))


@dataclass(frozen=True)
class ControlLimits:
    r_bar: float
    sigma_level_b: float
    sigma_b: float
    ucl: float
    lcl: float


def control_limits(ranges: Sequence[float], b: float = 3.0) -> ControlLimits:
    ranges = np.asarray(ranges, dtype=float).reshape(-1)
    if ranges.size == 0:
        raise ValidationError("control limits need at least one range value")
    if not np.all(np.isfinite(ranges)):
        raise ValidationError("range values must be finite")
    if np.any(ranges < 0):
        raise ValidationError("range values must be non-negative")
    s = sigma_of_b(b)
    r_bar = float(ranges.mean())
    return ControlLimits(
        r_bar=r_bar,
        sigma_level_b=float(b),
        sigma_b=s,
        ucl=r_bar + s * r_bar,
        lcl=max(0.0, r_bar - s * r_bar),
    )


def apr(ranges: Sequence[float], ucl: float) -> float:
    """Fraction of ranges at or below ``ucl``."""
    ranges = np.asarray(ranges, dtype=float).reshape(-1)
    if ranges.size == 0:
        raise ValidationError("APR needs at least one range value")
    if ucl < 0:
        raise ValidationError("ucl must be non-negative")
    return int(np.count_nonzero(ranges <= ucl)) / ranges.size


def apu(apr_value: float, ucl: float) -> float:
    if not 0 <= apr_value <= 1:
        raise ValidationError("APR must lie in [0, 1]")
    if ucl == 0:
        raise NumericalError("APU is undefined for UCL = 0")
    if ucl < 0:
        raise ValidationError("ucl must be positive")
    return apr_value / ucl


def range_values(slices: np.ndarray, template: np.ndarray, metric: Metric,
                 epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Per-row range of ``slices`` against ``template``, vectorised."""
    diff = slices - template
    if metric is Metric.MSE:
        return np.mean(diff**2, axis=1)
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    return np.mean(np.abs(diff) / (np.abs(template) + epsilon), axis=1)


def slice_ranges(dataset: TimeSlicedDataset, template, metric="maer",
                 epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """One range value per slice row, in row order."""
    template = as_samples(template, "template")
    if template.size != dataset.slice_length:
        raise ValidationError(
            f"template length {template.size} != slice length {dataset.slice_length}"
        )
    return range_values(dataset.slices, template, Metric.parse(metric), epsilon)


# --------------------------------------------------------------------------
# quality gate

@dataclass(frozen=True)
class QualityConfig:
    window: SliceWindow = field(default_factory=default_window)
    metric: Metric = Metric.MAER
    sigma_level: float = 3.0
    apr_min: float = 0.8
    epsilon: float = DEFAULT_EPSILON
    pooled: bool = False
    preprocess: PreprocessConfig = PreprocessConfig()
    rpeak: RPeakConfig = RPeakConfig()

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        if not self.sigma_level > 0:
            raise ValidationError("sigma_level must be positive")
        if not 0 <= self.apr_min <= 1:
            raise ValidationError("apr_min must lie in [0, 1]")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")


@dataclass
class RecordQuality:
    record_id: str
    n_peaks: int
    n_slices: int
    ranges: np.ndarray
    limits: Optional[ControlLimits]
    apr: float
    apu: Optional[float]
    accepted: bool
    reason: str = ""


@dataclass
class QualityReport:
    records: list[RecordQuality]
    config: QualityConfig

    @property
    def record_ids(self) -> list[str]:
        return [r.record_id for r in self.records]

    @property
    def accepted(self) -> list[str]:
        return [r.record_id for r in self.records if r.accepted]

    @property
    def rejected(self) -> list[str]:
        return [r.record_id for r in self.records if not r.accepted]

    def _triple(self, values):
        values = [v for v in values if v is not None]
        if not values:
            return None
        return (float(min(values)), float(np.mean(values)), float(max(values)))

    @property
    def apr_summary(self):
        return self._triple([r.apr for r in self.records if r.limits is not None])

    @property
    def apu_summary(self):
        return self._triple([r.apu for r in self.records if r.limits is not None])

    @property
    def ucl_summary(self):
        return self._triple([r.limits.ucl for r in self.records if r.limits is not None])

    def get(self, record_id: str) -> RecordQuality:
        for r in self.records:
            if r.record_id == record_id:
                return r
        raise KeyError(record_id)


def _record_ranges(record: EcgRecord, cfg: QualityConfig):
    clean = preprocess(record, cfg.preprocess)
    peaks = detect_r_peaks(clean, cfg.rpeak)
    dataset = slice_record(clean, peaks, cfg.window)
    if dataset.n_slices < 2:
        return len(peaks), dataset.n_slices, None
    template = dataset.slices.mean(axis=0)
    ranges = slice_ranges(dataset, template, cfg.metric, cfg.epsilon)
    return len(peaks), dataset.n_slices, ranges


def _judge(record_id, n_peaks, n_slices, ranges, limits, cfg) -> RecordQuality:
    if ranges is None:
        return RecordQuality(record_id, n_peaks, n_slices, np.zeros(0), None, 0.0, 0.0,
                             False, "insufficient slices")
    value = apr(ranges, limits.ucl)
    reason = ""
    if limits.ucl > 0:
        unit = apu(value, limits.ucl)
    else:
        unit = None
        reason = "degenerate: all ranges zero"
    accepted = value >= cfg.apr_min
    if not accepted:
        reason = f"APR {value:.4f} < {cfg.apr_min}"
    return RecordQuality(record_id, n_peaks, n_slices, ranges, limits, value, unit, accepted, reason)


def quality_gate(records: Sequence[EcgRecord], cfg: QualityConfig = QualityConfig()) -> QualityReport:
    """Pre-process, slice and score each record, accepting it when its APR
    reaches ``cfg.apr_min``.

    Each record's template is the column mean of its own slices. By default
    each record is judged against its own control limits, so a decision never
    depends on the rest of the batch; ``cfg.pooled`` computes one set of limits
    from all ranges instead.
    """
    records = list(records)
    if not records:
        raise ValidationError("quality gate needs at least one record")
    computed = [(rec.record_id, *_record_ranges(rec, cfg)) for rec in records]

    pooled_limits = None
    if cfg.pooled:
        valid = [c[3] for c in computed if c[3] is not None]
        if valid:
            pooled_limits = control_limits(np.concatenate(valid), cfg.sigma_level)

    out = []
    for record_id, n_peaks, n_slices, ranges in computed:
        limits = None
        if ranges is not None:
            limits = pooled_limits or control_limits(ranges, cfg.sigma_level)
        out.append(_judge(record_id, n_peaks, n_slices, ranges, limits, cfg))
    return QualityReport(out, cfg)

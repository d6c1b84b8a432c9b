"""Flat pipeline configuration shared by the CLI subcommands.

The file format is ``key = value`` per line with ``#`` comments. Unknown
keys are rejected. Precedence is flags > config file > defaults.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Any

from .auth import AuthConfig
from .errors import ValidationError
from .preprocess import BaselineConfig, PreprocessConfig, SpectralCleanConfig
from .quality import DEFAULT_EPSILON, Metric, QualityConfig
from .record import SliceWindow
from .slicing import RPeakConfig


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"not a boolean: {text!r}")


def _floats(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    text = str(text).strip()
    return tuple(float(v) for v in text.split(",") if v.strip()) if text else ()


def _window(text) -> tuple:
    if isinstance(text, SliceWindow):
        return (text.start_offset_s, text.end_offset_s)
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    w = SliceWindow.parse(str(text))
    return (w.start_offset_s, w.end_offset_s)


@dataclass(frozen=True)
class PipelineConfig:
    baseline_order: int = 10
    remove_peaks: bool = False
    peak_multiplier: float = 50.0
    notch: tuple = ()
    notch_halfwidth: float = 0.5
    protect_dc: bool = True
    flip_check: bool = True
    portion_s: float = 2.0
    refractory_s: float = 0.25
    threshold_frac: float = 0.5
    window: tuple = (0.0, 0.6)
    metric: str = "maer"
    epsilon: float = DEFAULT_EPSILON
    sigma_level: float = 3.0
    apr_min: float = 0.8
    pooled: bool = False
    margin: float = 1.0
    quorum: float = 0.5

    def __post_init__(self):
        conv = {
            "baseline_order": int,
            "remove_peaks": _bool,
            "peak_multiplier": float,
            "notch": _floats,
            "notch_halfwidth": float,
            "protect_dc": _bool,
            "flip_check": _bool,
            "portion_s": float,
            "refractory_s": float,
            "threshold_frac": float,
            "window": _window,
            "metric": lambda v: Metric.parse(v).value,
            "epsilon": float,
            "sigma_level": float,
            "apr_min": float,
            "pooled": _bool,
            "margin": float,
            "quorum": float,
        }
        for f in fields(self):
            value = getattr(self, f.name)
            try:
                object.__setattr__(self, f.name, conv[f.name](value))
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"bad value for {f.name}: {value!r} ({exc})") from None
        if self.portion_s <= 0:
            raise ValidationError("portion_s must be positive")
        # build every module config once so range errors surface here
        self.preprocess_config()
        self.quality_config()
        self.auth_config()

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def parse(cls, text: str) -> dict[str, str]:
        values: dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"config line {lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in cls.keys():
                raise ValidationError(f"config line {lineno}: unknown key {key!r}")
            values[key] = value.strip()
        return values

    @classmethod
    def load(cls, path=None, overrides: dict[str, Any] | None = None) -> "PipelineConfig":
        values: dict[str, Any] = {}
        if path is not None:
            with open(path, "r", encoding="utf-8") as fh:
                values.update(cls.parse(fh.read()))
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        unknown = set(values) - set(cls.keys())
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)

    def with_overrides(self, **kwargs) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    # module configs --------------------------------------------------------

    @property
    def slice_window(self) -> SliceWindow:
        return SliceWindow(*self.window)

    def preprocess_config(self) -> PreprocessConfig:
        return PreprocessConfig(
            baseline=BaselineConfig(self.baseline_order),
            spectral=SpectralCleanConfig(
                peak_multiplier=self.peak_multiplier,
                notch_freqs_hz=self.notch,
                notch_halfwidth_hz=self.notch_halfwidth,
                protect_dc=self.protect_dc,
            ),
            remove_peaks=self.remove_peaks,
            flip_check=self.flip_check,
            portion_s=self.portion_s,
        )

    def rpeak_config(self) -> RPeakConfig:
        return RPeakConfig(self.refractory_s, self.threshold_frac)

    def quality_config(self) -> QualityConfig:
        return QualityConfig(
            window=self.slice_window,
            metric=self.metric,
            sigma_level=self.sigma_level,
            apr_min=self.apr_min,
            epsilon=self.epsilon,
            pooled=self.pooled,
            preprocess=self.preprocess_config(),
            rpeak=self.rpeak_config(),
        )

    def auth_config(self) -> AuthConfig:
        return AuthConfig(
            metric=self.metric,
            epsilon=self.epsilon,
            sigma_level=self.sigma_level,
            margin=self.margin,
            quorum=self.quorum,
        )

    def echo(self) -> list[str]:
        """``key=value`` lines reproducing this config."""
        out = []
        for key, value in asdict(self).items():
            if isinstance(value, tuple):
                value = ",".join(repr(float(v)) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            out.append(f"{key}={value}")
        return out

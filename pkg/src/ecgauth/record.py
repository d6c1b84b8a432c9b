"""Domain types and the text record format.

Every type here is immutable: arrays are copied on construction and marked
read-only, and every transform elsewhere in the package returns a new value.
Amplitudes are in mV throughout.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import RecordDataError, RecordFormatError, ValidationError

RECORD_MAGIC = "# amgecg-record v1"


def to_index(seconds: float, fs_hz: float) -> int:
    """Convert a time in seconds to a sample count, rounding half away from zero."""
    x = seconds * fs_hz
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def frozen_array(values, ndim: int = 1) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ValidationError(f"expected a {ndim}-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("values must be finite (no NaN/Inf)")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EcgRecord:
    """A single ECG lead sampled at ``fs_hz``.

    ``flipped_hint`` is provenance only; flip status is always re-detected.
    """

    record_id: str
    fs_hz: float
    samples: np.ndarray
    subject_id: Optional[str] = None
    flipped_hint: Optional[bool] = None

    def __post_init__(self):
        fs = float(self.fs_hz)
        if not math.isfinite(fs) or fs <= 0:
            raise ValidationError(f"fs_hz must be positive, got {self.fs_hz!r}")
        object.__setattr__(self, "fs_hz", fs)
        samples = frozen_array(self.samples)
        if samples.size == 0:
            raise ValidationError("record must contain at least one sample")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.fs_hz

    @property
    def time_s(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.fs_hz

    def with_samples(self, samples) -> "EcgRecord":
        """Copy of this record with new samples and identical metadata."""
        return replace(self, samples=samples)

    def same_as(self, other: "EcgRecord") -> bool:
        """Bit-exact equality of metadata and samples."""
        return (
            self.record_id == other.record_id
            and self.subject_id == other.subject_id
            and self.fs_hz == other.fs_hz
            and self.flipped_hint == other.flipped_hint
            and np.array_equal(self.samples, other.samples)
        )


@dataclass(frozen=True)
class SliceWindow:
    """Slice extent in seconds relative to the anchoring R-peak."""

    start_offset_s: float
    end_offset_s: float

    def __post_init__(self):
        start, end = float(self.start_offset_s), float(self.end_offset_s)
        if not (math.isfinite(start) and math.isfinite(end)):
            raise ValidationError("window offsets must be finite")
        if not start < end:
            raise ValidationError(f"window start {start} must precede end {end}")
        object.__setattr__(self, "start_offset_s", start)
        object.__setattr__(self, "end_offset_s", end)

    @property
    def length_s(self) -> float:
        return self.end_offset_s - self.start_offset_s

    def n_samples(self, fs_hz: float) -> int:
        return to_index(self.length_s, fs_hz)

    @classmethod
    def parse(cls, text: str) -> "SliceWindow":
        """Parse ``"t0,t1"``."""
        parts = text.split(",")
        if len(parts) != 2:
            raise ValidationError(f"window must be 't0,t1', got {text!r}")
        try:
            return cls(float(parts[0]), float(parts[1]))
        except ValueError as exc:
            raise ValidationError(f"bad window {text!r}: {exc}") from None


@dataclass(frozen=True, eq=False)
class TimeSlicedDataset:
    """R-peak anchored slices, one row per kept beat."""

    fs_hz: float
    window: SliceWindow
    slices: np.ndarray
    peak_indices: np.ndarray
    subject_id: Optional[str] = None

    def __post_init__(self):
        if not self.fs_hz > 0:
            raise ValidationError("fs_hz must be positive")
        object.__setattr__(self, "fs_hz", float(self.fs_hz))
        length = self.window.n_samples(self.fs_hz)
        if length <= 0:
            raise ValidationError("window shorter than one sample at this fs")
        slices = np.array(self.slices, dtype=float)
        if slices.size == 0:
            slices = slices.reshape(0, length)
        slices = frozen_array(slices, ndim=2)
        if slices.shape[1] != length:
            raise ValidationError(
                f"slice length {slices.shape[1]} != window length {length}"
            )
        peaks = np.array(self.peak_indices, dtype=np.int64).reshape(-1)
        if peaks.size != slices.shape[0]:
            raise ValidationError("one peak index is required per slice")
        if np.any(np.diff(peaks) <= 0):
            raise ValidationError("peak indices must be strictly increasing")
        peaks.setflags(write=False)
        object.__setattr__(self, "slices", slices)
        object.__setattr__(self, "peak_indices", peaks)

    @property
    def n_slices(self) -> int:
        return self.slices.shape[0]

    @property
    def slice_length(self) -> int:
        return self.slices.shape[1]

    def scaled(self, factor: float) -> "TimeSlicedDataset":
        return replace(self, slices=self.slices * factor)


class UseCaseCategory(str, enum.Enum):
    """Authentication use cases.

    HOS is closed-set identification, SCK open-set identification (unknown
    persons allowed) and WD verification of a single enrolled owner.
    """

    HOS = "HOS"
    SCK = "SCK"
    WD = "WD"

    @classmethod
    def parse(cls, text: str) -> "UseCaseCategory":
        try:
            return cls(text.upper())
        except ValueError:
            raise ValidationError(f"unknown mode {text!r}; expected hos, sck or wd") from None


# --------------------------------------------------------------------------
# text format

def _format_float(value: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(value))


def format_fs(fs_hz: float) -> str:
    return str(int(fs_hz)) if float(fs_hz).is_integer() else _format_float(fs_hz)


def parse_header_line(line: str, lineno: int):
    body = line[1:].strip()
    if "=" not in body:
        return None
    key, _, value = body.partition("=")
    key = key.strip()
    if not key:
        raise RecordFormatError("empty header key", lineno)
    return key, value.strip()


def read_record_with_meta(path) -> tuple[EcgRecord, dict[str, str]]:
    """Read a record file, also returning every ``# key=value`` header pair."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0].rstrip("\r") != RECORD_MAGIC:
        raise RecordFormatError(f"missing {RECORD_MAGIC!r} header", 1)
    meta: dict[str, str] = {}
    samples = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if samples:
                raise RecordFormatError("header line after sample data", lineno)
            kv = parse_header_line(line, lineno)
            if kv is not None:
                meta[kv[0]] = kv[1]
            continue
        try:
            value = float(line)
        except ValueError:
            raise RecordDataError(f"non-numeric sample {line!r}", lineno) from None
        if not math.isfinite(value):
            raise RecordDataError(f"non-finite sample {line!r}", lineno)
        samples.append(value)

    if "fs_hz" not in meta:
        raise RecordFormatError("header lacks fs_hz")
    try:
        fs = float(meta["fs_hz"])
    except ValueError:
        raise RecordFormatError(f"fs_hz is not a number: {meta['fs_hz']!r}") from None
    if not math.isfinite(fs) or fs <= 0:
        raise ValidationError(f"fs_hz must be positive, got {meta['fs_hz']}")
    hint = meta.get("flipped_hint")
    if hint not in (None, "0", "1"):
        raise RecordFormatError(f"flipped_hint must be 0 or 1, got {hint!r}")
    if not samples:
        raise ValidationError("record contains no samples")
    record = EcgRecord(
        record_id=meta.get("record_id", os.path.splitext(os.path.basename(str(path)))[0]),
        fs_hz=fs,
        samples=samples,
        subject_id=meta.get("subject"),
        flipped_hint=None if hint is None else hint == "1",
    )
    return record, meta


def read_record(path) -> EcgRecord:
    """Read a record file written in the ``amgecg-record v1`` text format."""
    return read_record_with_meta(path)[0]


def write_record(record: EcgRecord, path, extra: Optional[dict] = None) -> None:
    """Write ``record`` to ``path``; ``extra`` adds further ``# key=value`` lines."""
    lines = [RECORD_MAGIC, f"# fs_hz={format_fs(record.fs_hz)}"]
    lines.append(f"# record_id={record.record_id}")
    if record.subject_id is not None:
        lines.append(f"# subject={record.subject_id}")
    if record.flipped_hint is not None:
        lines.append(f"# flipped_hint={int(record.flipped_hint)}")
    for key, value in (extra or {}).items():
        lines.append(f"# {key}={value}")
    lines.extend(_format_float(v) for v in record.samples)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def segment(record: EcgRecord, t0_s: float, t1_s: float) -> EcgRecord:
    """Samples in ``[round(t0*fs), round(t1*fs))`` with metadata preserved."""
    if not t0_s < t1_s:
        raise ValidationError(f"empty or reversed interval [{t0_s}, {t1_s})")
    if t0_s < 0 or t1_s > record.duration_s:
        raise ValidationError(
            f"interval [{t0_s}, {t1_s}) exceeds record duration {record.duration_s}"
        )
    i0, i1 = to_index(t0_s, record.fs_hz), to_index(t1_s, record.fs_hz)
    if i1 <= i0:
        raise ValidationError("interval shorter than one sample")
    return record.with_samples(record.samples[i0:i1])


def as_samples(values: Sequence[float], name: str = "samples") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"{name} must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite")
    return arr

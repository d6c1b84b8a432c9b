"""R-peak detection and R-peak anchored time slicing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .errors import RecordFormatError, ValidationError
from .record import (
    EcgRecord,
    SliceWindow,
    TimeSlicedDataset,
    format_fs,
    parse_header_line,
    to_index,
)

SLICES_MAGIC = "# amgecg-slices v1"


@dataclass(frozen=True)
class RPeakConfig:
    refractory_s: float = 0.25
    threshold_frac: float = 0.5

    def __post_init__(self):
        if not 0 < self.refractory_s < 3.0:
            raise ValidationError("refractory_s must lie in (0, 3) s")
        if not 0 < self.threshold_frac < 1:
            raise ValidationError("threshold_frac must lie in (0, 1)")


def default_window() -> SliceWindow:
    """0.6 s from the R-peak: one beat interval at 100 beats per minute."""
    return SliceWindow(0.0, 0.6)


def detect_r_peaks(record: EcgRecord, cfg: RPeakConfig = RPeakConfig()) -> np.ndarray:
    """Relative-threshold local maxima with refractory suppression.

    The record should already be baseline-adjusted and upright. Candidates
    are interior local maxima at or above ``threshold_frac`` of the global
    maximum. Candidates are then accepted greedily in order of decreasing
    amplitude (earlier index first on ties), skipping any closer than
    ``refractory_s`` to an accepted peak.

    Returns:
        Strictly increasing sample indices; empty when the record has no
        positive maximum.
    """
    x = record.samples
    top = x.max()
    if not top > 0:
        return np.zeros(0, dtype=np.int64)
    candidates, _ = find_peaks(x, height=cfg.threshold_frac * top)
    if candidates.size == 0:
        return np.zeros(0, dtype=np.int64)
    min_gap = cfg.refractory_s * record.fs_hz
    # stable sort on -amplitude keeps earlier indices first among ties
    order = candidates[np.argsort(-x[candidates], kind="stable")]
    accepted: list[int] = []
    taken = np.zeros(0, dtype=np.int64)
    for idx in order:
        if taken.size and np.min(np.abs(taken - idx)) < min_gap:
            continue
        accepted.append(int(idx))
        taken = np.asarray(accepted, dtype=np.int64)
    return np.sort(taken)


def slice_record(record: EcgRecord, peaks, window: SliceWindow | None = None) -> TimeSlicedDataset:
    """Cut one fixed-length slice per peak, anchored at the peak.

    Row ``i`` covers ``[p_i + round(start*fs), p_i + round(start*fs) + L)``
    with ``L = round((end - start) * fs)``; slices that would cross either
    record boundary are dropped rather than padded.
    """
    window = window or default_window()
    peaks = np.asarray(peaks, dtype=np.int64).reshape(-1)
    n = len(record)
    if np.any(np.diff(peaks) <= 0):
        raise ValidationError("peaks must be strictly increasing")
    if peaks.size and (peaks[0] < 0 or peaks[-1] >= n):
        raise ValidationError("peaks must lie within the record")
    length = window.n_samples(record.fs_hz)
    offset = to_index(window.start_offset_s, record.fs_hz)
    starts = peaks + offset
    keep = (starts >= 0) & (starts + length <= n)
    kept = peaks[keep]
    rows = [record.samples[s:s + length] for s in starts[keep]]
    slices = np.vstack(rows) if rows else np.zeros((0, length))
    return TimeSlicedDataset(
        fs_hz=record.fs_hz,
        window=window,
        slices=slices,
        peak_indices=kept,
        subject_id=record.subject_id,
    )


def write_slices(dataset: TimeSlicedDataset, path, extra: dict | None = None) -> None:
    w = dataset.window
    lines = [
        SLICES_MAGIC,
        f"# fs_hz={format_fs(dataset.fs_hz)}",
        f"# window={w.start_offset_s!r},{w.end_offset_s!r}",
        f"# peaks={','.join(str(int(p)) for p in dataset.peak_indices)}",
    ]
    if dataset.subject_id is not None:
        lines.append(f"# subject={dataset.subject_id}")
    for key, value in (extra or {}).items():
        lines.append(f"# {key}={value}")
    for row in dataset.slices:
        lines.append(",".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_slices(path) -> TimeSlicedDataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0].rstrip("\r") != SLICES_MAGIC:
        raise RecordFormatError(f"missing {SLICES_MAGIC!r} header", 1)
    meta: dict[str, str] = {}
    rows = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            kv = parse_header_line(line, lineno)
            if kv is not None:
                meta[kv[0]] = kv[1]
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError:
            raise RecordFormatError(f"non-numeric slice value in {line[:40]!r}", lineno) from None
    for key in ("fs_hz", "window", "peaks"):
        if key not in meta:
            raise RecordFormatError(f"slice file lacks {key}")
    window = SliceWindow.parse(meta["window"])
    peaks = [int(p) for p in meta["peaks"].split(",") if p.strip()]
    fs = float(meta["fs_hz"])
    if rows and len({len(r) for r in rows}) != 1:
        raise RecordFormatError("slice rows differ in length")
    slices = np.array(rows) if rows else np.zeros((0, window.n_samples(fs)))
    return TimeSlicedDataset(
        fs_hz=fs, window=window, slices=slices, peak_indices=peaks, subject_id=meta.get("subject")
    )

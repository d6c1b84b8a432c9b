"""CSV plot data for the figure-style outputs. No rendering happens here."""

from __future__ import annotations

import csv
from typing import Optional, Sequence

import numpy as np

from .errors import RecordFormatError, ValidationError
from .preprocess import BaselineConfig, baseline_adjust
from .record import EcgRecord, TimeSlicedDataset

KINDS = ("signal", "spectrum", "slices-overlay", "r-chart")


def _fmt(x) -> str:
    return format(float(x), ".12g")


def _write(path, header, rows, comments=()):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


def signal_rows(record: EcgRecord, adjusted: bool = False, order: int = 10):
    t = record.time_s
    if adjusted:
        adj, _ = baseline_adjust(record, BaselineConfig(order))
        return ["t_s", "mv", "adjusted_mv"], zip(t, record.samples, adj.samples)
    return ["t_s", "mv"], zip(t, record.samples)


def spectrum_rows(record: EcgRecord):
    """One-sided magnitude spectrum, bins 0..fs/2."""
    mag = np.abs(np.fft.rfft(record.samples))
    freqs = np.fft.rfftfreq(len(record), d=1.0 / record.fs_hz)
    return ["f_hz", "magnitude"], zip(freqs, mag)


def overlay_rows(dataset: TimeSlicedDataset):
    header = ["col_index"] + [f"slice_{i + 1}" for i in range(dataset.n_slices)]
    rows = ([j, *dataset.slices[:, j]] for j in range(dataset.slice_length))
    return header, rows


def rchart_rows(ranges, ucl: float, lcl: float, r_bar: float):
    header = ["slice_index", "range", "ucl", "lcl", "r_bar"]
    return header, ([i, r, ucl, lcl, r_bar] for i, r in enumerate(ranges))


def read_quality_csv(path) -> dict[str, dict[str, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or "record_id" not in reader.fieldnames:
        raise RecordFormatError(f"{path} is not a quality CSV")
    return {row["record_id"]: row for row in reader}


def read_ranges_csv(path, record_id: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or "range" not in reader.fieldnames:
        raise RecordFormatError(f"{path} is not a quality ranges CSV")
    rows = [(int(r["slice_index"]), float(r["range"])) for r in reader if r["record_id"] == record_id]
    rows.sort()
    return np.array([v for _, v in rows])


def plot_data(kind: str, source, out_path, *, adjusted: bool = False,
              ranges: Optional[np.ndarray] = None, limits: Optional[tuple] = None,
              comments: Sequence[str] = ()) -> None:
    """Write plot data of ``kind`` for an already-loaded ``source``.

    ``source`` is an :class:`EcgRecord` for ``signal``/``spectrum``, a
    :class:`TimeSlicedDataset` for ``slices-overlay``, and ignored for
    ``r-chart`` which takes ``ranges`` and ``limits=(ucl, lcl, r_bar)``.
    ``comments`` become leading ``#`` lines.
    """
    if kind in ("signal", "spectrum"):
        if not isinstance(source, EcgRecord):
            raise ValidationError(f"{kind} plot data needs an ECG record")
        header, rows = signal_rows(source, adjusted) if kind == "signal" else spectrum_rows(source)
    elif kind == "slices-overlay":
        if not isinstance(source, TimeSlicedDataset):
            raise ValidationError("slices-overlay plot data needs a slices file")
        header, rows = overlay_rows(source)
    elif kind == "r-chart":
        if ranges is None or limits is None:
            raise ValidationError("r-chart plot data needs ranges and control limits")
        header, rows = rchart_rows(ranges, *limits)
    else:
        raise ValidationError(f"unknown plot kind {kind!r}; expected one of {', '.join(KINDS)}")
    _write(out_path, header, rows, comments)

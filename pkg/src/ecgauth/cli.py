"""Command-line front end.

Exit status: 0 success, 1 validation or numerical error, 2 I/O error,
64 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from . import __version__
from .auth import UNKNOWN, ReferenceDb, authenticate, enroll, evaluate, read_refdb, write_refdb
from .config import PipelineConfig
from .errors import EcgError, ValidationError
from .plotdata import KINDS, plot_data, read_quality_csv, read_ranges_csv
from .preprocess import detect_flip, preprocess
from .quality import quality_gate
from .record import (
    RECORD_MAGIC,
    TimeSlicedDataset,
    UseCaseCategory,
    read_record,
    read_record_with_meta,
    write_record,
)
from .slicing import SLICES_MAGIC, detect_r_peaks, read_slices, slice_record, write_slices
from . import synth

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_USAGE = 0, 1, 2, 64

log = logging.getLogger("ecgauth")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def fmt(x) -> str:
    return format(float(x), ".12g")


def _floats_arg(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _window_arg(text: str) -> tuple:
    parts = _floats_arg(text)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"window must be 't0,t1', got {text!r}")
    return parts


# --------------------------------------------------------------------------
# shared helpers

def effective_config(args) -> PipelineConfig:
    overrides = {
        "baseline_order": getattr(args, "baseline_order", None),
        "peak_multiplier": getattr(args, "peak_multiplier", None),
        "notch": getattr(args, "notch", None),
        "notch_halfwidth": getattr(args, "notch_halfwidth", None),
        "refractory_s": getattr(args, "refractory", None),
        "threshold_frac": getattr(args, "threshold_frac", None),
        "window": getattr(args, "window", None),
        "metric": getattr(args, "metric", None),
        "epsilon": getattr(args, "epsilon", None),
        "sigma_level": getattr(args, "sigma_level", None),
        "apr_min": getattr(args, "apr_min", None),
        "margin": getattr(args, "margin", None),
        "quorum": getattr(args, "quorum", None),
    }
    if getattr(args, "remove_peaks", False):
        overrides["remove_peaks"] = True
    if getattr(args, "no_flip_check", False):
        overrides["flip_check"] = False
    if getattr(args, "pooled", False):
        overrides["pooled"] = True
    return PipelineConfig.load(args.config, overrides)


def out_path(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def record_stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def sniff(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\r\n")
    if first == RECORD_MAGIC:
        return "record"
    if first == SLICES_MAGIC:
        return "slices"
    raise ValidationError(f"{path}: not a record or slices file")


def load_dataset(path: str, cfg: PipelineConfig) -> TimeSlicedDataset:
    """A slices file as-is, or a record file pre-processed, peak-detected and sliced."""
    if sniff(path) == "slices":
        return read_slices(path)
    record = preprocess(read_record(path), cfg.preprocess_config())
    return slice_record(record, detect_r_peaks(record, cfg.rpeak_config()), cfg.slice_window)


def say(args, text: str = "") -> None:
    if not args.quiet:
        print(text)


def echo_dict(cfg: PipelineConfig) -> dict[str, str]:
    return dict(f"config.{line}".split("=", 1) for line in cfg.echo())


def echo_lines(cfg: PipelineConfig) -> list[str]:
    return [f"# generator=ecgauth {__version__}"] + [f"# {k}={v}" for k, v in echo_dict(cfg).items()]


# --------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    if args.corpus == "quality-demo":
        seed = args.seed if args.seed is not None else 7
        records = synth.quality_demo_corpus(seed=seed, fs_hz=args.fs, duration_s=args.duration)
        for rec in records:
            write_record(rec, out_path(args, f"{rec.record_id}.ecg"))
        say(args, f"wrote {len(records)} records to {args.out}")
        return EXIT_OK

    seed = args.seed if args.seed is not None else 0
    morphology = synth.subject_morphology(args.morphology) if args.morphology is not None else synth.BeatMorphology()
    spec = synth.SynthSpec(
        fs_hz=args.fs,
        duration_s=args.duration,
        heart_rate_bpm=args.bpm,
        morphology=morphology,
        rr_jitter_frac=args.jitter,
        seed=seed,
    )
    rec, peaks = synth.generate(spec, record_id=args.id, subject_id=args.subject)
    if args.drift_sin is not None:
        freq, amp = args.drift_sin
        rec, _ = synth.add_baseline_wander(rec, "sinusoid", frequency_hz=freq, amplitude_mv=amp)
    if args.drift_poly is not None:
        rec, _ = synth.add_baseline_wander(rec, "polynomial", coefficients=args.drift_poly)
    if args.powerline is not None:
        rec = synth.add_powerline(rec, args.powerline, args.pli_amplitude, args.harmonics)
    if args.noise:
        rec = synth.add_gaussian_noise(rec, args.noise, seed + 1)
    if args.bursts:
        rec = synth.add_noise_bursts(rec, args.bursts, seed=seed + 2)
    if args.flip:
        rec = synth.flip_signal(rec)
    extra = {"peaks": ",".join(str(int(p)) for p in peaks)}
    write_record(rec, out_path(args, f"{args.id}.ecg"), extra)
    say(args, f"record={args.id} samples={len(rec)} fs_hz={fmt(rec.fs_hz)} peaks={len(peaks)}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = effective_config(args)
    pcfg = cfg.preprocess_config()
    for path in args.inputs:
        rec, meta = read_record_with_meta(path)
        flipped = cfg.flip_check and detect_flip(rec, cfg.portion_s, pcfg.baseline)
        out = preprocess(rec, pcfg)
        extra = {k: v for k, v in meta.items() if k not in ("fs_hz", "subject", "flipped_hint", "record_id")}
        extra.update(echo_dict(cfg))
        write_record(out, out_path(args, f"{record_stem(path)}.ecg"), extra)
        say(args, f"record={rec.record_id} flipped={'yes' if flipped else 'no'}")
    return EXIT_OK


def cmd_rpeaks(args) -> int:
    cfg = effective_config(args)
    for path in args.inputs:
        rec = read_record(path)
        if args.preprocess:
            rec = preprocess(rec, cfg.preprocess_config())
        peaks = detect_r_peaks(rec, cfg.rpeak_config())
        target = out_path(args, f"{record_stem(path)}.rpeaks.csv")
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(echo_lines(cfg)) + "\n")
            fh.write("index,t_s\n")
            for p in peaks:
                fh.write(f"{int(p)},{fmt(p / rec.fs_hz)}\n")
        say(args, f"record={rec.record_id} peaks={len(peaks)}")
    return EXIT_OK


def cmd_slice(args) -> int:
    cfg = effective_config(args)
    for path in args.inputs:
        rec = read_record(path)
        if args.preprocess:
            rec = preprocess(rec, cfg.preprocess_config())
        peaks = detect_r_peaks(rec, cfg.rpeak_config())
        ds = slice_record(rec, peaks, cfg.slice_window)
        write_slices(ds, out_path(args, f"{record_stem(path)}.slices"), echo_dict(cfg))
        say(args, f"record={rec.record_id} peaks={len(peaks)} slices={ds.n_slices} length={ds.slice_length}")
    return EXIT_OK


def _triple(values) -> str:
    return "[" + " ".join(fmt(v) for v in values) + "]" if values else "[]"


def cmd_quality(args) -> int:
    cfg = effective_config(args)
    records = [read_record(p) for p in args.inputs]
    report = quality_gate(records, cfg.quality_config())
    kind = cfg.metric.upper()
    w = cfg.slice_window

    summary = [
        f"Freq: {fmt(records[0].fs_hz)}",
        f"SliceTime: [{fmt(w.start_offset_s)} {fmt(w.end_offset_s)}]",
        f"NumofSlice: {' '.join(str(r.n_slices) for r in report.records)}",
        f"NumofRecord: {len(records)}",
        f"FileRecord: {' '.join(report.record_ids)}",
        f"SigmaLevel: {fmt(cfg.sigma_level)}",
        f"min_mean_Max_{kind}_APR: {_triple(report.apr_summary)}",
        f"min_mean_Max_{kind}_APU: {_triple(report.apu_summary)}",
        f"min_mean_Max_{kind}_UCL: {_triple(report.ucl_summary)}",
        f"Accepted = {' '.join(report.accepted)}",
        f"Rejected = {' '.join(report.rejected)}",
    ]
    for line in summary:
        say(args, line)
    for r in report.records:
        if r.reason and not r.accepted:
            say(args, f"  {r.record_id}: {r.reason}")

    header = echo_lines(cfg)
    with open(out_path(args, "quality.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(header) + "\n")
        fh.write("record_id,n_peaks,n_slices,r_bar,ucl,lcl,apr,apu,accepted\n")
        for r in report.records:
            lim = r.limits
            cells = [r.record_id, str(r.n_peaks), str(r.n_slices)]
            cells += [fmt(lim.r_bar), fmt(lim.ucl), fmt(lim.lcl)] if lim else ["", "", ""]
            cells += [fmt(r.apr), "" if r.apu is None else fmt(r.apu), "1" if r.accepted else "0"]
            fh.write(",".join(cells) + "\n")
    with open(out_path(args, "quality_ranges.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(header) + "\n")
        fh.write("record_id,slice_index,range\n")
        for r in report.records:
            for i, v in enumerate(r.ranges):
                fh.write(f"{r.record_id},{i},{fmt(v)}\n")
    with open(out_path(args, "quality_summary.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(header + summary) + "\n")
    return EXIT_OK


def cmd_enroll(args) -> int:
    cfg = effective_config(args)
    acfg = cfg.auth_config()
    if args.subject and len(args.inputs) > 1:
        raise ValidationError("--subject applies to a single input; label multiple inputs in their headers")
    for line in echo_lines(cfg):
        say(args, line)
    templates = {}
    if args.append and os.path.exists(args.db):
        templates.update(read_refdb(args.db).templates)
    for path in args.inputs:
        ds = load_dataset(path, cfg)
        subject = args.subject or ds.subject_id
        if not subject:
            raise ValidationError(f"{path}: no subject id (use --subject or a '# subject=' header)")
        tpl = enroll(ds, subject, acfg)
        templates[subject] = tpl
        lim = tpl.train_limits
        say(args, f"subject={subject} slices={tpl.train_slice_count} rbar={fmt(lim.r_bar)} ucl={fmt(lim.ucl)} lcl={fmt(lim.lcl)}")
    db = ReferenceDb(templates, acfg)
    os.makedirs(os.path.dirname(os.path.abspath(args.db)), exist_ok=True)
    write_refdb(db, args.db, echo_dict(cfg))
    say(args, f"reference db: {args.db} ({len(db)} subjects)")
    return EXIT_OK


def _open_db(args, cfg: PipelineConfig) -> ReferenceDb:
    overrides = {"margin": cfg.margin, "quorum": cfg.quorum}
    if args.metric is not None:
        overrides["metric"] = cfg.metric
    if args.epsilon is not None:
        overrides["epsilon"] = cfg.epsilon
    return read_refdb(args.db, overrides)


def cmd_authenticate(args) -> int:
    cfg = effective_config(args)
    mode = UseCaseCategory.parse(args.mode)
    if mode is UseCaseCategory.HOS and args.claim:
        raise ValidationError("--claim conflicts with --mode hos (closed-set identification)")
    if mode is UseCaseCategory.WD and not args.claim:
        raise ValidationError("--mode wd requires --claim")
    db = _open_db(args, cfg)
    for line in echo_lines(cfg):
        say(args, line)
    for path in args.inputs:
        ds = load_dataset(path, cfg)
        d = authenticate(ds, db, mode, claimed=args.claim, cfg=db.config)
        say(args, (
            f"input={record_stem(path)} mode={mode.value} claimed={d.claimed_id or '-'} "
            f"predicted={d.predicted_id} score={fmt(d.score)} slices={len(d.per_slice_scores)} "
            f"accepted={'true' if d.accepted else 'false'}"
        ))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = effective_config(args)
    mode = UseCaseCategory.parse(args.mode)
    db = _open_db(args, cfg)
    testsets = []
    for path in args.inputs:
        ds = load_dataset(path, cfg)
        testsets.append((ds, ds.subject_id if ds.subject_id in db.templates else UNKNOWN))
    result = evaluate(testsets, db, mode, db.config)
    for line in echo_lines(cfg):
        say(args, line)
    for key, rate in result.rates.items():
        say(args, f"{key}: {rate}")
    return EXIT_OK


def _comment_lines(path: str) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [ln[2:].rstrip("\n") for ln in fh if ln.startswith("# ")]


def cmd_plot_data(args) -> int:
    cfg = effective_config(args)
    if args.kind in ("signal", "spectrum"):
        if sniff(args.input) != "record":
            raise ValidationError(f"{args.kind} plot data needs a record file")
        target = args.output or out_path(args, f"{record_stem(args.input)}.{args.kind}.csv")
        plot_data(args.kind, read_record(args.input), target, adjusted=args.adjusted,
                  comments=[ln[2:] for ln in echo_lines(cfg)])
    elif args.kind == "slices-overlay":
        target = args.output or out_path(args, f"{record_stem(args.input)}.{args.kind}.csv")
        plot_data(args.kind, load_dataset(args.input, cfg), target,
                  comments=[ln[2:] for ln in echo_lines(cfg)])
    else:
        table = read_quality_csv(args.input)
        if args.record is None:
            if len(table) != 1:
                raise ValidationError("r-chart needs --record when the quality run has several records")
            args.record = next(iter(table))
        if args.record not in table:
            raise ValidationError(f"record {args.record!r} not in {args.input}")
        row = table[args.record]
        if not row["ucl"]:
            raise ValidationError(f"record {args.record!r} has no control limits")
        target = args.output or out_path(args, f"{args.record}.r-chart.csv")
        ranges = read_ranges_csv(os.path.join(os.path.dirname(args.input), "quality_ranges.csv"), args.record)
        plot_data("r-chart", None, target, ranges=ranges,
                  limits=(float(row["ucl"]), float(row["lcl"]), float(row["r_bar"])),
                  comments=_comment_lines(args.input) + [f"record_id={args.record}"])
    say(args, f"wrote {target}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def _global_flags(parser: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="flat key = value config file")
    parser.add_argument("--out", default=d if suppress else ".", help="output directory")
    parser.add_argument("--seed", type=int, default=d, help="64-bit seed for synthetic data")
    parser.add_argument("-q", "--quiet", action="store_true", default=d if suppress else False)


def _preprocess_flags(p):
    p.add_argument("--baseline-order", type=int)
    p.add_argument("--peak-multiplier", type=float)
    p.add_argument("--remove-peaks", action="store_true", help="zero abnormal spectral peaks")
    p.add_argument("--notch", type=_floats_arg, help="comma-separated frequencies to remove")
    p.add_argument("--notch-halfwidth", type=float)
    p.add_argument("--no-flip-check", action="store_true")


def _rpeak_flags(p):
    p.add_argument("--refractory", type=float, help="refractory period [s]")
    p.add_argument("--threshold-frac", type=float)
    p.add_argument("--window", type=_window_arg, help="slice window t0,t1 [s]")


def _metric_flags(p):
    p.add_argument("--metric", choices=["maer", "mse"])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--sigma-level", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ecgauth", description="ECG biometric pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic ECG record")
    p.add_argument("--id", default="synth")
    p.add_argument("--subject")
    p.add_argument("--fs", type=float, default=400.0)
    p.add_argument("--duration", type=float, default=20.0)
    p.add_argument("--bpm", type=float, default=90.0)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--morphology", type=int, help="subject morphology index (default: reference beat)")
    p.add_argument("--noise", type=float, default=0.0, help="white noise sigma [mV]")
    p.add_argument("--bursts", type=float, default=0.0, help="noise-burst sigma [mV]")
    p.add_argument("--powerline", type=float, help="interference frequency [Hz]")
    p.add_argument("--pli-amplitude", type=float, default=0.2)
    p.add_argument("--harmonics", type=int, default=0)
    p.add_argument("--drift-sin", type=_floats_arg, help="sinusoidal drift freq,amplitude")
    p.add_argument("--drift-poly", type=_floats_arg, help="polynomial drift coefficients c0,c1,...")
    p.add_argument("--flip", action="store_true")
    p.add_argument("--corpus", choices=["quality-demo"], help="write a ten-record demo corpus instead")

    p = add("preprocess", cmd_preprocess, "baseline, spectral cleaning and flip correction")
    p.add_argument("inputs", nargs="+")
    _preprocess_flags(p)

    for name, func, help_ in (("rpeaks", cmd_rpeaks, "detect R-peaks"),
                              ("slice", cmd_slice, "R-peak anchored slicing")):
        p = add(name, func, help_)
        p.add_argument("inputs", nargs="+")
        p.add_argument("--preprocess", action="store_true", help="pre-process before detection")
        _preprocess_flags(p)
        _rpeak_flags(p)

    p = add("quality", cmd_quality, "per-record data-quality gate")
    p.add_argument("inputs", nargs="+")
    _preprocess_flags(p)
    _rpeak_flags(p)
    _metric_flags(p)
    p.add_argument("--apr-min", type=float)
    p.add_argument("--pooled", action="store_true", help="one set of control limits for the batch")

    p = add("enroll", cmd_enroll, "build or extend a reference database")
    p.add_argument("inputs", nargs="+", help="slices or record files")
    p.add_argument("--subject")
    p.add_argument("--db", required=True)
    p.add_argument("--append", action="store_true")
    _preprocess_flags(p)
    _rpeak_flags(p)
    _metric_flags(p)

    for name, func, help_ in (("authenticate", cmd_authenticate, "authenticate test data"),
                              ("evaluate", cmd_evaluate, "evaluate labelled test sets")):
        p = add(name, func, help_)
        p.add_argument("inputs", nargs="+", help="slices or record files")
        p.add_argument("--db", required=True)
        p.add_argument("--mode", required=True, choices=["hos", "sck", "wd", "HOS", "SCK", "WD"])
        if name == "authenticate":
            p.add_argument("--claim")
        p.add_argument("--margin", type=float)
        p.add_argument("--quorum", type=float)
        _preprocess_flags(p)
        _rpeak_flags(p)
        _metric_flags(p)

    p = add("plot-data", cmd_plot_data, "emit CSV plot data")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("input")
    p.add_argument("-o", "--output", help="output CSV path")
    p.add_argument("--record", help="record id (r-chart)")
    p.add_argument("--adjusted", action="store_true", help="add baseline-adjusted column (signal)")
    _preprocess_flags(p)
    _rpeak_flags(p)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError(parser.format_usage().strip())
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        if "usage:" not in str(exc):
            print(parser.format_usage().strip(), file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except EcgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run())

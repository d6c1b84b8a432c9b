"""Reference-database enrollment and use-case authentication.

A subject's reference template is the column mean of their training
slices together with the R-chart limits of the training ranges. Test
slices are scored against templates with the range metric (MAER by
default) and combined by slice-level voting:

* HOS: closed-set identification, majority vote of per-slice nearest
  templates; never answers unknown.
* SCK: open-set identification; a slice whose best score exceeds that
  template's ``ucl * margin`` votes UNKNOWN.
* WD: verification of one claimed owner; accepted when at least
  ``quorum`` of the slices fall within the owner's threshold.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    CompatibilityError,
    EnrollmentError,
    RecordFormatError,
    UnknownSubjectError,
    ValidationError,
)
from .quality import (
    DEFAULT_EPSILON,
    ControlLimits,
    Metric,
    control_limits,
    maer,
    mse,
    range_values,
    sigma_of_b,
)
from .record import SliceWindow, TimeSlicedDataset, UseCaseCategory, as_samples, format_fs

UNKNOWN = "UNKNOWN"
REFDB_MAGIC = "AMGREF v1"


@dataclass(frozen=True)
class AuthConfig:
    metric: Metric = Metric.MAER
    epsilon: float = DEFAULT_EPSILON
    sigma_level: float = 3.0
    margin: float = 1.0
    quorum: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if not self.sigma_level > 0:
            raise ValidationError("sigma_level must be positive")
        if not self.margin > 0:
            raise ValidationError("margin must be positive")
        if not 0 < self.quorum <= 1:
            raise ValidationError("quorum must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class ReferenceTemplate:
    subject_id: str
    fs_hz: float
    window: SliceWindow
    mu: np.ndarray
    train_limits: ControlLimits
    train_slice_count: int

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        if mu.ndim != 1 or mu.size != self.window.n_samples(self.fs_hz):
            raise ValidationError("template length does not match window at fs")
        if not np.all(np.isfinite(mu)):
            raise ValidationError("template must be finite")
        if self.train_slice_count < 2:
            raise ValidationError("a template needs at least two training slices")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    def threshold(self, margin: float) -> float:
        if math.isinf(margin):
            return math.inf
        return self.train_limits.ucl * margin


def enroll(dataset: TimeSlicedDataset, subject: str, cfg: AuthConfig = AuthConfig()) -> ReferenceTemplate:
    """Build a subject's template from their training slices."""
    if not subject or any(c.isspace() for c in subject):
        raise EnrollmentError("subject id must be a non-empty token without whitespace")
    if dataset.n_slices < 2:
        raise EnrollmentError(f"need at least 2 slices to enroll {subject}, got {dataset.n_slices}")
    mu = dataset.slices.mean(axis=0)
    ranges = range_values(dataset.slices, mu, cfg.metric, cfg.epsilon)
    return ReferenceTemplate(
        subject_id=subject,
        fs_hz=dataset.fs_hz,
        window=dataset.window,
        mu=mu,
        train_limits=control_limits(ranges, cfg.sigma_level),
        train_slice_count=dataset.n_slices,
    )


def score_slice(slice_values, template: ReferenceTemplate, epsilon: float = DEFAULT_EPSILON,
                metric=Metric.MAER) -> float:
    values = as_samples(slice_values, "slice")
    if values.size != template.mu.size:
        raise ValidationError(f"slice length {values.size} != template length {template.mu.size}")
    if Metric.parse(metric) is Metric.MSE:
        return mse(values, template.mu)
    return maer(values, template.mu, epsilon)


@dataclass(frozen=True)
class ReferenceDb:
    templates: Mapping[str, ReferenceTemplate]
    config: AuthConfig = AuthConfig()

    def __post_init__(self):
        templates = dict(sorted(self.templates.items()))
        for key, tpl in templates.items():
            if key != tpl.subject_id:
                raise ValidationError(f"template key {key!r} != subject {tpl.subject_id!r}")
        shapes = {(t.fs_hz, t.window) for t in templates.values()}
        if len(shapes) > 1:
            raise CompatibilityError("all templates must share fs_hz and window")
        object.__setattr__(self, "templates", templates)

    @classmethod
    def from_templates(cls, templates: Sequence[ReferenceTemplate], config: AuthConfig = AuthConfig()):
        ids = [t.subject_id for t in templates]
        if len(set(ids)) != len(ids):
            raise ValidationError("subject ids must be unique")
        return cls({t.subject_id: t for t in templates}, config)

    @property
    def subject_ids(self) -> list[str]:
        return list(self.templates)

    @property
    def fs_hz(self) -> float:
        return next(iter(self.templates.values())).fs_hz

    @property
    def window(self) -> SliceWindow:
        return next(iter(self.templates.values())).window

    def __getitem__(self, subject: str) -> ReferenceTemplate:
        try:
            return self.templates[subject]
        except KeyError:
            raise UnknownSubjectError(f"subject {subject!r} is not enrolled") from None

    def __len__(self):
        return len(self.templates)


@dataclass
class AuthDecision:
    mode: UseCaseCategory
    claimed_id: Optional[str]
    predicted_id: Optional[str]
    score: float
    per_slice_scores: list[float]
    accepted: bool
    slice_predictions: list[str] = field(default_factory=list)


def _check_compatible(dataset: TimeSlicedDataset, db: ReferenceDb):
    if len(db) == 0:
        raise ValidationError("reference database is empty")
    if dataset.n_slices == 0:
        raise ValidationError("dataset has no slices")
    if dataset.fs_hz != db.fs_hz or dataset.window != db.window:
        raise CompatibilityError(
            f"dataset (fs={dataset.fs_hz}, window={dataset.window}) does not match "
            f"reference db (fs={db.fs_hz}, window={db.window})"
        )


def score_matrix(dataset: TimeSlicedDataset, db: ReferenceDb, cfg: AuthConfig) -> np.ndarray:
    """Scores of every slice (rows) against every template (columns, sorted ids)."""
    cols = [range_values(dataset.slices, t.mu, cfg.metric, cfg.epsilon) for t in db.templates.values()]
    return np.column_stack(cols)


def relative_scores(matrix: np.ndarray, db: ReferenceDb) -> np.ndarray:
    """Scores divided by each template's training UCL.

    Raw MAER is not comparable across templates: a template sample close
    to zero inflates every score against that template, genuine or not.
    Measured in units of the template's own control limit the columns
    become comparable. A zero UCL maps zero scores to 0 and others to inf.
    """
    ucl = np.array([t.train_limits.ucl for t in db.templates.values()])
    out = np.empty_like(matrix)
    pos = ucl > 0
    out[:, pos] = matrix[:, pos] / ucl[pos]
    out[:, ~pos] = np.where(matrix[:, ~pos] == 0, 0.0, np.inf)
    return out


def _vote(labels: Sequence[str], unknown_wins_ties: bool = False) -> str:
    counts = Counter(labels)
    known = sorted((lbl for lbl in counts if lbl != UNKNOWN), key=lambda s: (-counts[s], s))
    best_known = known[0] if known else None
    n_unknown = counts.get(UNKNOWN, 0)
    if best_known is None:
        return UNKNOWN
    if n_unknown > counts[best_known] or (unknown_wins_ties and n_unknown == counts[best_known]):
        return UNKNOWN
    return best_known


def authenticate(dataset: TimeSlicedDataset, db: ReferenceDb, mode, claimed: Optional[str] = None,
                 cfg: Optional[AuthConfig] = None) -> AuthDecision:
    """Decide who produced ``dataset`` (HOS, SCK) or whether it is the claimed owner (WD).

    Each slice's nearest template is the one with the smallest score
    relative to that template's training UCL (see :func:`relative_scores`).
    Per-slice ties between templates go to the lexicographically smallest
    subject id, as do vote ties between subjects. In SCK an UNKNOWN vote
    count equal to the best subject's wins.

    ``score`` is the mean per-slice score against the predicted (or claimed)
    subject; when the prediction is UNKNOWN it is the mean best score.
    """
    cfg = cfg or db.config
    mode = UseCaseCategory.parse(mode) if isinstance(mode, str) else mode
    _check_compatible(dataset, db)
    if claimed is not None:
        db[claimed]  # raises UnknownSubjectError

    if mode is UseCaseCategory.WD:
        if claimed is None:
            raise ValidationError("WD verification requires a claimed subject")
        tpl = db[claimed]
        scores = range_values(dataset.slices, tpl.mu, cfg.metric, cfg.epsilon)
        theta = tpl.threshold(cfg.margin)
        within = float(np.mean(scores <= theta))
        accepted = within >= cfg.quorum
        return AuthDecision(
            mode=mode,
            claimed_id=claimed,
            predicted_id=claimed if accepted else UNKNOWN,
            score=float(scores.mean()),
            per_slice_scores=scores.tolist(),
            accepted=accepted,
            slice_predictions=[claimed if s <= theta else UNKNOWN for s in scores],
        )

    ids = db.subject_ids
    matrix = score_matrix(dataset, db, cfg)
    relative = relative_scores(matrix, db)
    # argmin returns the first minimum; columns are sorted so ties go to the smallest id
    best_col = np.argmin(relative, axis=1)
    rows = np.arange(matrix.shape[0])
    best_score = matrix[rows, best_col]
    labels = [ids[c] for c in best_col]

    if mode is UseCaseCategory.HOS:
        predicted = _vote(labels)
        accepted = True
    else:
        thresholds = np.array([db[i].threshold(cfg.margin) for i in ids])
        outside = best_score > thresholds[best_col]
        labels = [UNKNOWN if out else lbl for out, lbl in zip(outside, labels)]
        predicted = _vote(labels, unknown_wins_ties=True)
        accepted = predicted == claimed if claimed is not None else predicted != UNKNOWN

    if predicted == UNKNOWN:
        per_slice = best_score
    else:
        per_slice = matrix[:, ids.index(predicted)]
    return AuthDecision(
        mode=mode,
        claimed_id=claimed,
        predicted_id=predicted,
        score=float(per_slice.mean()),
        per_slice_scores=per_slice.tolist(),
        accepted=accepted,
        slice_predictions=labels,
    )


# --------------------------------------------------------------------------
# evaluation

@dataclass(frozen=True)
class Rate:
    count: int
    total: int

    @property
    def value(self) -> Optional[float]:
        return self.count / self.total if self.total else None

    def __str__(self):
        v = self.value
        return f"{self.count}/{self.total}" + ("" if v is None else f" = {v:.9g}")


@dataclass
class Evaluation:
    mode: UseCaseCategory
    rates: dict[str, Rate]
    decisions: list[AuthDecision]

    def __getitem__(self, key: str) -> Rate:
        return self.rates[key]


def evaluate(testsets: Sequence[tuple[TimeSlicedDataset, str]], db: ReferenceDb, mode,
             cfg: Optional[AuthConfig] = None) -> Evaluation:
    """Aggregate decisions over labelled test sets.

    HOS reports ``accuracy``. SCK reports ``accuracy`` over known test sets,
    ``far`` (unknown persons identified as someone enrolled) and ``frr``
    (known persons answered UNKNOWN). WD claims every enrolled identity for
    every test set and reports ``far`` over impostor claims and ``frr`` over
    genuine claims.
    """
    cfg = cfg or db.config
    mode = UseCaseCategory.parse(mode) if isinstance(mode, str) else mode
    testsets = list(testsets)
    if not testsets:
        raise ValidationError("evaluation needs at least one test set")
    decisions = []
    if mode is UseCaseCategory.HOS:
        correct = 0
        for ds, true_id in testsets:
            if true_id == UNKNOWN or true_id not in db.templates:
                raise ValidationError("HOS is closed-set: every test set must be an enrolled subject")
            d = authenticate(ds, db, mode, cfg=cfg)
            decisions.append(d)
            correct += d.predicted_id == true_id
        return Evaluation(mode, {"accuracy": Rate(correct, len(testsets))}, decisions)

    if mode is UseCaseCategory.SCK:
        known_total = known_correct = known_rejected = 0
        unknown_total = unknown_accepted = 0
        for ds, true_id in testsets:
            d = authenticate(ds, db, mode, cfg=cfg)
            decisions.append(d)
            if true_id in db.templates:
                known_total += 1
                known_correct += d.predicted_id == true_id
                known_rejected += d.predicted_id == UNKNOWN
            else:
                unknown_total += 1
                unknown_accepted += d.predicted_id != UNKNOWN
        return Evaluation(mode, {
            "accuracy": Rate(known_correct, known_total),
            "far": Rate(unknown_accepted, unknown_total),
            "frr": Rate(known_rejected, known_total),
        }, decisions)

    genuine = genuine_rejected = impostor = impostor_accepted = 0
    for ds, true_id in testsets:
        for subject in db.subject_ids:
            d = authenticate(ds, db, mode, claimed=subject, cfg=cfg)
            decisions.append(d)
            if subject == true_id:
                genuine += 1
                genuine_rejected += not d.accepted
            else:
                impostor += 1
                impostor_accepted += d.accepted
    return Evaluation(mode, {
        "far": Rate(impostor_accepted, impostor),
        "frr": Rate(genuine_rejected, genuine),
    }, decisions)


# --------------------------------------------------------------------------
# reference-db file format

def write_refdb(db: ReferenceDb, path, extra: Optional[dict] = None) -> None:
    """Write ``db``; ``extra`` adds ``# key=value`` lines that readers ignore."""
    cfg = db.config
    lines = [
        REFDB_MAGIC,
        f"# metric={cfg.metric.value}",
        f"# epsilon={cfg.epsilon!r}",
        f"# sigma_level={cfg.sigma_level!r}",
    ]
    lines += [f"# {k}={v}" for k, v in (extra or {}).items()]
    for tpl in db.templates.values():
        lim = tpl.train_limits
        lines.append(
            f"subject {tpl.subject_id} fs {format_fs(tpl.fs_hz)} "
            f"window {tpl.window.start_offset_s!r} {tpl.window.end_offset_s!r} "
            f"len {tpl.mu.size} count {tpl.train_slice_count} "
            f"rbar {lim.r_bar!r} ucl {lim.ucl!r} lcl {lim.lcl!r}"
        )
        lines.append("mu " + " ".join(repr(float(v)) for v in tpl.mu))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_refdb(path, overrides: Optional[dict] = None) -> ReferenceDb:
    """Load a reference db; ``overrides`` replace stored AuthConfig fields."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh.read().split("\n")]
    if not lines or lines[0] != REFDB_MAGIC:
        raise RecordFormatError(f"missing {REFDB_MAGIC!r} header", 1)
    meta: dict[str, str] = {}
    templates = []
    pending = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
            continue
        tokens = line.split()
        if tokens[0] == "subject":
            if pending is not None:
                raise RecordFormatError("subject line without mu line", lineno)
            if len(tokens) != 17:
                raise RecordFormatError("malformed subject line", lineno)
            try:
                pending = dict(
                    subject=tokens[1],
                    fs=float(tokens[3]),
                    window=SliceWindow(float(tokens[5]), float(tokens[6])),
                    length=int(tokens[8]),
                    count=int(tokens[10]),
                    rbar=float(tokens[12]),
                    ucl=float(tokens[14]),
                    lcl=float(tokens[16]),
                )
            except (ValueError, IndexError):
                raise RecordFormatError("malformed subject line", lineno) from None
            if [tokens[i] for i in (2, 4, 7, 9, 11, 13, 15)] != ["fs", "window", "len", "count", "rbar", "ucl", "lcl"]:
                raise RecordFormatError("unexpected subject line keys", lineno)
        elif tokens[0] == "mu":
            if pending is None:
                raise RecordFormatError("mu line without subject line", lineno)
            try:
                mu = np.array([float(v) for v in tokens[1:]])
            except ValueError:
                raise RecordFormatError("non-numeric mu value", lineno) from None
            if mu.size != pending["length"]:
                raise RecordFormatError(f"mu has {mu.size} values, expected {pending['length']}", lineno)
            templates.append(pending | {"mu": mu})
            pending = None
        else:
            raise RecordFormatError(f"unexpected line {tokens[0]!r}", lineno)
    if pending is not None:
        raise RecordFormatError("truncated file: missing final mu line")

    cfg_kwargs = {}
    if "metric" in meta:
        cfg_kwargs["metric"] = meta["metric"]
    if "epsilon" in meta:
        cfg_kwargs["epsilon"] = float(meta["epsilon"])
    if "sigma_level" in meta:
        cfg_kwargs["sigma_level"] = float(meta["sigma_level"])
    cfg_kwargs.update(overrides or {})
    cfg = AuthConfig(**cfg_kwargs)
    s = sigma_of_b(cfg.sigma_level)
    tpls = [
        ReferenceTemplate(
            subject_id=t["subject"],
            fs_hz=t["fs"],
            window=t["window"],
            mu=t["mu"],
            train_limits=ControlLimits(t["rbar"], cfg.sigma_level, s, t["ucl"], t["lcl"]),
            train_slice_count=t["count"],
        )
        for t in templates
    ]
    return ReferenceDb.from_templates(tpls, cfg)

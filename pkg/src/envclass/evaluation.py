"""Dataset splitting, two-class balancing, metrics and report files."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .ingest import Label, RawRecord, RecordingSession
from .windowing import WINDOW_SIZE, partition_windows

logger = logging.getLogger(__name__)


class EvaluationError(ValueError):
    pass


class Granularity(str, Enum):
    RECORD = "record"
    WINDOW = "window"
    SESSION = "session"


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.20
    validation_fraction: float = 0.20
    granularity: Granularity = Granularity.RECORD
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "granularity", Granularity(self.granularity))
        for f in (self.test_fraction, self.validation_fraction):
            if not 0.0 < f < 1.0:
                raise EvaluationError("split fractions must lie in (0, 1)")
        if self.test_fraction + self.validation_fraction >= 1.0:
            raise EvaluationError("test and validation fractions must sum below 1")


class DatasetSplit(NamedTuple):
    train: list[RecordingSession]
    validation: list[RecordingSession]
    test: list[RecordingSession]


def _record_label(s: RecordingSession, r: RawRecord) -> Label | None:
    return r.label if r.label is not None else s.label


def _units(sessions: Sequence[RecordingSession], granularity: Granularity):
    """(session position, record positions, label) for every split unit."""
    units = []
    for si, s in enumerate(sessions):
        if granularity is Granularity.SESSION:
            if s.records:
                units.append((si, tuple(range(len(s.records))), s.label or _record_label(s, s.records[0])))
        elif granularity is Granularity.WINDOW:
            for w in partition_windows(s).windows:
                idx = tuple(range(w.index * WINDOW_SIZE, (w.index + 1) * WINDOW_SIZE))
                units.append((si, idx, _record_label(s, w.records[0])))
        else:
            for ri, r in enumerate(s.records):
                units.append((si, (ri,), _record_label(s, r)))
    if any(u[2] is None for u in units):
        raise EvaluationError("splitting needs labeled data")
    return units


def _assemble(sessions, units, chosen) -> list[RecordingSession]:
    per_session: dict[int, list[int]] = {}
    for u in sorted(chosen):
        si, idx, _ = units[u]
        per_session.setdefault(si, []).extend(idx)
    out = []
    for si in sorted(per_session):
        s = sessions[si]
        keep = sorted(per_session[si])
        out.append(s.with_records(s.records[i] for i in keep))
    return out


def split(sessions: Sequence[RecordingSession], spec: SplitSpec = SplitSpec()) -> DatasetSplit:
    """Stratified train/validation/test partition at the requested granularity.

    Records of one unit (a window or a session) always land in the same
    partition. Deterministic for a fixed seed.
    """
    sessions = list(sessions)
    units = _units(sessions, spec.granularity)
    if not units:
        raise EvaluationError("nothing to split")
    rng = np.random.default_rng(spec.seed)
    by_label: dict[Label, list[int]] = {}
    for u, (_, _, lab) in enumerate(units):
        by_label.setdefault(lab, []).append(u)
    train, val, test = [], [], []
    for lab in sorted(by_label, key=lambda x: x.value):
        members = np.asarray(by_label[lab])
        members = members[rng.permutation(members.size)]
        n = members.size
        n_test = int(round(n * spec.test_fraction))
        n_val = int(round(n * spec.validation_fraction))
        if n_test == 0 or n_val == 0 or n - n_test - n_val <= 0:
            raise EvaluationError(
                f"class {lab.value} has {n} {spec.granularity.value} units, too few to appear in every "
                f"partition at fractions {spec.test_fraction}/{spec.validation_fraction}; "
                "use Session granularity or adjust the fractions")
        test += members[:n_test].tolist()
        val += members[n_test:n_test + n_val].tolist()
        train += members[n_test + n_val:].tolist()
    return DatasetSplit(_assemble(sessions, units, train), _assemble(sessions, units, val),
                        _assemble(sessions, units, test))


def merge_indoor(sessions: Iterable[RecordingSession]) -> list[RecordingSession]:
    """Relabel II and INW as I."""
    out = []
    for s in sessions:
        lab = s.label
        if lab in (Label.II, Label.INW):
            lab = Label.I
        recs = (
            r if r.label not in (Label.II, Label.INW) else dataclasses.replace(r, label=Label.I)
            for r in s.records
        )
        out.append(dataclasses.replace(s, records=tuple(recs), label=lab))
    return out


def balance_two_class(
    sessions: Sequence[RecordingSession], seed: int = 0, granularity: Granularity | str = Granularity.RECORD
) -> list[RecordingSession]:
    """Merge II and INW into I, then downsample I uniformly to the size of O.

    Counting is in units of ``granularity`` (records, windows or whole
    sessions). Sessions left without records are dropped.
    """
    granularity = Granularity(granularity)
    merged = merge_indoor(sessions)
    units = _units(merged, granularity)
    outdoor = [u for u, x in enumerate(units) if x[2] is Label.O]
    indoor = [u for u, x in enumerate(units) if x[2] is Label.I]
    if not outdoor:
        raise EvaluationError("cannot balance: no outdoor data")
    if len(indoor) > len(outdoor):
        rng = np.random.default_rng(seed)
        indoor = sorted(rng.choice(indoor, size=len(outdoor), replace=False).tolist())
    elif len(indoor) < len(outdoor):
        logger.warning("indoor data (%d) smaller than outdoor (%d); left as is", len(indoor), len(outdoor))
    return _assemble(merged, units, outdoor + indoor)


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

@dataclass
class MetricsReport:
    classes: tuple[Label, ...]
    confusion: np.ndarray
    model_kind: str = ""
    feature_set: str = ""
    technique: str = "none"

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def per_class_accuracy(self) -> dict[Label, float | None]:
        """Row-normalized diagonal (per-class recall); ``None`` without support."""
        sup = self.support
        return {c: (float(self.confusion[i, i] / sup[i]) if sup[i] else None) for i, c in enumerate(self.classes)}

    @property
    def overall_accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.total)

    @property
    def outdoor_to_indoor_rate(self) -> float | None:
        """Share of true-O samples predicted II (or I in the two-class task)."""
        o = self.classes.index(Label.O)
        target = Label.II if Label.II in self.classes else Label.I
        t = self.classes.index(target)
        sup = self.support[o]
        return float(self.confusion[o, t] / sup) if sup else None

    @property
    def cell(self) -> str:
        return f"{self.model_kind}_{self.feature_set}_{self.technique}_{len(self.classes)}class"

    def to_json(self) -> dict:
        return {
            "model": self.model_kind,
            "feature_set": self.feature_set,
            "technique": self.technique,
            "n_classes": len(self.classes),
            "classes": [c.value for c in self.classes],
            "confusion": self.confusion.tolist(),
            "per_class_accuracy": {c.value: v for c, v in self.per_class_accuracy.items()},
            "per_class_accuracy_definition": "recall (row-normalized confusion-matrix diagonal)",
            "overall_accuracy": self.overall_accuracy,
            "outdoor_to_indoor_interior_rate": self.outdoor_to_indoor_rate,
            "n_samples": self.total,
        }


def confusion_matrix(truths: Sequence[Label], predictions: Sequence[Label], classes: Sequence[Label]) -> np.ndarray:
    pos = {c: i for i, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truths, predictions):
        cm[pos[t], pos[p]] += 1
    return cm


def compute_metrics(
    truths: Sequence[Label],
    predictions: Sequence[Label],
    classes: Sequence[Label],
    model_kind: str = "",
    feature_set: str = "",
    technique: str = "none",
) -> MetricsReport:
    if len(truths) != len(predictions):
        raise EvaluationError("truths and predictions differ in length")
    if len(truths) == 0:
        raise EvaluationError("no samples to evaluate")
    classes = tuple(Label(c) for c in classes)
    return MetricsReport(classes, confusion_matrix(truths, predictions, classes), model_kind, feature_set, technique)


CSV_COLUMNS = ("model", "feature_set", "technique", "n_classes", "class", "metric", "value")


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def metrics_rows(reports: Iterable[MetricsReport]) -> list[list[str]]:
    rows = []
    for r in reports:
        base = [r.model_kind, r.feature_set, r.technique, str(len(r.classes))]
        for c, acc in r.per_class_accuracy.items():
            rows.append(base + [c.value, "accuracy", _fmt(acc)])
        rows.append(base + ["O", "o_to_ii_error", _fmt(r.outdoor_to_indoor_rate)])
        rows.append(base + ["all", "overall_accuracy", _fmt(r.overall_accuracy)])
    return rows


def emit_report(reports: Sequence[MetricsReport], out_dir: str | Path, extra: dict | None = None) -> list[Path]:
    """Write ``metrics.json``, ``metrics.csv`` and one ``confusion_<cell>.csv`` per report."""
    if not reports:
        raise EvaluationError("no reports to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    doc = {"reports": [r.to_json() for r in reports]}
    if extra:
        doc.update(extra)
    p = out_dir / "metrics.json"
    p.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    written.append(p)
    p = out_dir / "metrics.csv"
    with open(p, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(metrics_rows(reports))
    written.append(p)
    for r in reports:
        p = out_dir / f"confusion_{r.cell}.csv"
        with open(p, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\predicted", *(c.value for c in r.classes)])
            for c, row in zip(r.classes, r.confusion):
                w.writerow([c.value, *(int(v) for v in row)])
        written.append(p)
    return written

"""Adjustable classification: route each decision to the model trained on
the feature set the measurements actually provide."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .features import BandGroup, FeatureSetId, Technology, classify_band
from .ingest import Label, RawRecord, RecordingSession
from .models.bundle import ModelBundle, load_bundle
from .windowing import DecisionUnits, Technique, build_units, decide_units

REQUIRED_LAYOUTS = (FeatureSetId.ALL72, FeatureSetId.NO6GHZ67, FeatureSetId.NO6GHZ_NONR40)


class RegistryError(LookupError):
    pass


@dataclass(frozen=True)
class AvailabilityProfile:
    has_wifi6: bool
    has_nr: bool


def detect_availability(records: RawRecord | Iterable[RawRecord]) -> AvailabilityProfile:
    """Pool-level presence of 6 GHz Wi-Fi and NR observations."""
    if isinstance(records, RawRecord):
        records = [records]
    wifi6 = nr = False
    for r in records:
        nr = nr or bool(r.nr)
        if not wifi6:
            wifi6 = any(classify_band(o.frequency_mhz, Technology.WIFI) is BandGroup.WIFI_6 for o in r.wifi)
        if wifi6 and nr:
            break
    return AvailabilityProfile(wifi6, nr)


ROUTES = {
    (True, True): FeatureSetId.ALL72,
    (False, True): FeatureSetId.NO6GHZ67,
    (False, False): FeatureSetId.NO6GHZ_NONR40,
    # no model drops NR alone; the All72 model sees sentinel NR features
    (True, False): FeatureSetId.ALL72,
}


class ModelRegistry:
    """Bundles of one model kind and class mapping, keyed by feature set."""

    def __init__(self, bundles: Mapping[FeatureSetId, ModelBundle]):
        self.bundles = {FeatureSetId(k): v for k, v in bundles.items()}
        kinds = {b.kind for b in self.bundles.values()}
        classes = {b.classes for b in self.bundles.values()}
        if len(kinds) > 1 or len(classes) > 1:
            raise RegistryError("registry bundles must share model kind and class mapping")
        for lid, b in self.bundles.items():
            if b.layout_id is not lid:
                raise RegistryError(f"bundle registered as {lid.value} has layout {b.layout_id.value}")

    @property
    def kind(self) -> str:
        return next(iter(self.bundles.values())).kind

    @property
    def classes(self) -> tuple[Label, ...]:
        return next(iter(self.bundles.values())).classes

    def require(self, layouts: Sequence[FeatureSetId] = REQUIRED_LAYOUTS) -> None:
        for lid in layouts:
            if lid not in self.bundles:
                raise RegistryError(f"registry has no bundle for layout {lid.value}")

    def get(self, layout_id: FeatureSetId) -> ModelBundle:
        try:
            return self.bundles[FeatureSetId(layout_id)]
        except KeyError:
            raise RegistryError(f"registry has no bundle for layout {FeatureSetId(layout_id).value}") from None

    @classmethod
    def from_dir(cls, path: str | Path, kind: str | None = None, n_classes: int | None = None) -> "ModelRegistry":
        return cls({b.layout_id: b for b in scan_bundles(path, kind, n_classes)})


def scan_bundles(path: str | Path, kind: str | None = None, n_classes: int | None = None) -> list[ModelBundle]:
    """Load every ``*.bundle`` under ``path`` matching the filters, sorted by file name."""
    path = Path(path)
    if not path.is_dir():
        raise RegistryError(f"registry directory {path} does not exist")
    out = []
    for f in sorted(path.glob("*.bundle")):
        b = load_bundle(f)
        if (kind is None or b.kind == kind) and (n_classes is None or len(b.classes) == n_classes):
            out.append(b)
    return out


def route(profile: AvailabilityProfile, registry: ModelRegistry) -> ModelBundle:
    return registry.get(ROUTES[(profile.has_wifi6, profile.has_nr)])


def session_weighted_accuracy(accuracies: Sequence[float], counts: Sequence[int]) -> float:
    """Σ acc_i·n_i / Σ n_i over recording collections."""
    if len(accuracies) == 0 or len(accuracies) != len(counts):
        raise ValueError("need one record count per accuracy and at least one collection")
    if any(n <= 0 for n in counts):
        raise ValueError("record counts must be positive")
    return sum(a * n for a, n in zip(accuracies, counts)) / sum(counts)


@dataclass(frozen=True)
class Prediction:
    session_id: str
    index: int
    routed_layout: FeatureSetId
    predicted: Label
    truth: Label | None


def classify_adjustable(
    sessions: Sequence[RecordingSession] | DecisionUnits,
    registry: ModelRegistry,
    technique: Technique | str = Technique.NONE,
    per_session: bool = False,
) -> list[Prediction]:
    """Route every decision unit by its availability profile and classify it.

    With ``per_session`` the profile is judged over the whole session
    instead of the unit's own records.
    """
    registry.require()
    if isinstance(sessions, DecisionUnits):
        units = sessions
        if per_session:
            raise ValueError("per_session routing needs sessions, not prebuilt units")
        session_profiles = {}
    else:
        units = build_units(sessions, technique)
        session_profiles = {s.id: detect_availability(s.records) for s in sessions} if per_session else {}

    def choose(u: int) -> ModelBundle:
        prof = session_profiles.get(units.session_ids[u]) or detect_availability(units.pools[u])
        return route(prof, registry)

    preds, layouts = decide_units(units, choose)
    return [
        Prediction(sid, i, lid, p, t)
        for sid, i, lid, p, t in zip(units.session_ids, units.indices, layouts, preds, units.truths)
    ]


def classify_with(units: DecisionUnits, bundle: ModelBundle) -> list[Prediction]:
    """Classify every unit with one fixed bundle."""
    preds, layouts = decide_units(units, lambda u: bundle)
    return [
        Prediction(sid, i, lid, p, t)
        for sid, i, lid, p, t in zip(units.session_ids, units.indices, layouts, preds, units.truths)
    ]


def per_session_accuracy(predictions: Iterable[Prediction]) -> tuple[list[float], list[int]]:
    """Accuracy and decision count of every labeled session, in first-seen order."""
    hits: dict[str, list[int]] = {}
    for p in predictions:
        if p.truth is None:
            continue
        h = hits.setdefault(p.session_id, [0, 0])
        h[0] += int(p.predicted == p.truth)
        h[1] += 1
    return [h[0] / h[1] for h in hits.values()], [h[1] for h in hits.values()]


PREDICTION_COLUMNS = ("session_id", "window_or_record_index", "routed_layout", "predicted_class", "true_class")


def write_predictions(predictions: Iterable[Prediction], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_COLUMNS)
        for p in predictions:
            w.writerow([p.session_id, p.index, p.routed_layout.value, p.predicted.value,
                        p.truth.value if p.truth is not None else ""])

"""Training and evaluation orchestration shared by the CLI and tests."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .adjustable import ModelRegistry, Prediction, classify_adjustable, classify_with, per_session_accuracy, session_weighted_accuracy
from .evaluation import Granularity, MetricsReport, SplitSpec, balance_two_class, compute_metrics, emit_report, merge_indoor, split
from .features import FeatureMatrix, FeatureSetId, extract_matrix, fit_normalizer, normalize_matrix
from .ingest import Label, RecordingSession, write_dataset_csv
from .models.bundle import MODEL_KINDS, ModelBundle, class_mapping, fingerprint, save_bundle
from .models.dnn import TrainConfig, dnn_train
from .models.forest import train_random_forest
from .models.tree import TreeParams, train_decision_tree
from .synth import GeneratorConfig, generate_dataset
from .windowing import DecisionUnits, Technique, build_units

logger = logging.getLogger(__name__)

ALL_LAYOUTS = tuple(FeatureSetId)


def class_index(label: Label, classes: Sequence[Label]) -> int:
    if len(classes) == 2 and label in (Label.II, Label.INW):
        label = Label.I
    return classes.index(label)


def encode_labels(labels: Iterable[Label], classes: Sequence[Label]) -> np.ndarray:
    return np.array([class_index(l, classes) for l in labels], dtype=np.intp)


@dataclass(frozen=True)
class TrainSpec:
    kind: str
    layout: FeatureSetId
    n_classes: int
    seed: int
    tree: TreeParams = TreeParams()
    dnn: TrainConfig = TrainConfig()
    feature_mode: str = "per_split"

    @property
    def name(self) -> str:
        return f"{self.kind}_{self.layout.value}_{self.n_classes}class"


def train_bundle(train: FeatureMatrix, validation: FeatureMatrix | None, spec: TrainSpec) -> ModelBundle:
    """Fit the normalizer and model for one (kind, layout, class count) cell.

    Trees train on train + validation; the DNN keeps validation for
    model selection. The normalizer sees only the model's training rows.
    """
    if spec.kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {spec.kind!r}")
    classes = class_mapping(spec.n_classes)
    tr = train.project(spec.layout)
    va = validation.project(spec.layout) if validation is not None and len(validation) else None
    if spec.kind != "dnn" and va is not None:
        fit_values = np.vstack([tr.values, va.values])
        fit_labels = encode_labels([*tr.labels, *va.labels], classes)
    else:
        fit_values, fit_labels = tr.values, encode_labels(tr.labels, classes)
    norm = fit_normalizer(fit_values, spec.layout)
    X = normalize_matrix(fit_values, norm)
    k = len(classes)
    if spec.kind == "dt":
        model = train_decision_tree(X, fit_labels, k, spec.tree, spec.seed)
    elif spec.kind == "rf":
        model = train_random_forest(X, fit_labels, k, spec.tree, spec.seed, feature_mode=spec.feature_mode)
    else:
        Xv = normalize_matrix(va.values, norm) if va is not None else None
        yv = encode_labels(va.labels, classes) if va is not None else None
        cfg = TrainConfig(**{**asdict(spec.dnn), "seed": spec.seed})
        model = dnn_train(X, fit_labels, Xv, yv, k, cfg)
    meta = {
        "seed": spec.seed,
        "n_train": int(X.shape[0]),
        "n_validation": int(len(va)) if (va is not None and spec.kind == "dnn") else 0,
        "dataset_fingerprint": fingerprint(X, fit_labels),
        "tree_params": asdict(spec.tree) if spec.kind != "dnn" else None,
        "train_config": asdict(spec.dnn) | {"seed": spec.seed} if spec.kind == "dnn" else None,
        "feature_mode": spec.feature_mode if spec.kind == "rf" else None,
    }
    return ModelBundle(model, spec.layout, norm, classes, meta)


def report_for(predictions: Sequence[Prediction], classes: Sequence[Label], kind: str,
               feature_set: str, technique: str) -> MetricsReport:
    truths = [class_mapping(len(classes))[class_index(p.truth, classes)] for p in predictions]
    return compute_metrics(truths, [p.predicted for p in predictions], classes, kind, feature_set, technique)


def evaluate_bundle(bundle: ModelBundle, units: DecisionUnits) -> MetricsReport:
    preds = [p for p in classify_with(units, bundle) if p.truth is not None]
    return report_for(preds, bundle.classes, bundle.kind, bundle.layout_id.value, units.technique.value)


def evaluate_adjustable(registry: ModelRegistry, units: DecisionUnits) -> tuple[MetricsReport, float]:
    """Adjustable-routing report and its session-weighted accuracy."""
    preds = [p for p in classify_adjustable(units, registry) if p.truth is not None]
    report = report_for(preds, registry.classes, registry.kind, "adjustable", units.technique.value)
    accs, counts = per_session_accuracy(preds)
    return report, session_weighted_accuracy(accs, counts)


def prepare_classes(sessions: Sequence[RecordingSession], n_classes: int, seed: int,
                    granularity: Granularity = Granularity.WINDOW) -> list[RecordingSession]:
    if n_classes == 2:
        return balance_two_class(sessions, seed, granularity)
    return list(sessions)


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir: Path) -> Path:
    files = sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != "manifest.json")
    doc = {"files": [{"path": p.relative_to(out_dir).as_posix(), "sha256": sha256_file(p),
                      "bytes": p.stat().st_size} for p in files]}
    target = out_dir / "manifest.json"
    target.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return target


@dataclass
class ReproduceConfig:
    seed: int
    sessions_per_label: int = 50
    records_per_session: int = 60
    kinds: tuple[str, ...] = MODEL_KINDS
    layouts: tuple[FeatureSetId, ...] = ALL_LAYOUTS
    class_counts: tuple[int, ...] = (3, 2)
    techniques: tuple[Technique, ...] = (Technique.NONE, Technique.MV, Technique.DA)
    jobs: int = 1
    dnn: TrainConfig = TrainConfig()
    profiles: dict | None = None

    def to_json(self) -> dict:
        return {
            "seed": self.seed, "sessions_per_label": self.sessions_per_label,
            "records_per_session": self.records_per_session, "kinds": list(self.kinds),
            "layouts": [l.value for l in self.layouts], "class_counts": list(self.class_counts),
            "techniques": [t.value for t in self.techniques], "dnn": asdict(self.dnn),
            "split": asdict(SplitSpec(granularity=Granularity.WINDOW, seed=self.seed)) | {"granularity": "window"},
            "custom_profiles": self.profiles is not None,
        }


@dataclass
class ReproduceResult:
    reports: list[MetricsReport]
    weighted: dict[str, float] = field(default_factory=dict)
    bundles: dict[str, ModelBundle] = field(default_factory=dict)


def run_experiment(sessions: Sequence[RecordingSession], cfg: ReproduceConfig) -> ReproduceResult:
    """Train every (kind, layout, class count) cell and evaluate every technique."""
    result = ReproduceResult([])
    for k in cfg.class_counts:
        data = prepare_classes(sessions, k, cfg.seed)
        parts = split(data, SplitSpec(granularity=Granularity.WINDOW, seed=cfg.seed))
        train_m = extract_matrix(parts.train)
        val_m = extract_matrix(parts.validation)
        specs = [TrainSpec(kind, lay, k, cfg.seed, dnn=cfg.dnn) for kind in cfg.kinds for lay in cfg.layouts]
        with ThreadPoolExecutor(max_workers=max(1, cfg.jobs)) as pool:
            bundles = list(pool.map(lambda s: train_bundle(train_m, val_m, s), specs))
        units = {t: build_units(parts.test, t) for t in cfg.techniques}
        for spec, bundle in zip(specs, bundles):
            result.bundles[spec.name] = bundle
            for t in cfg.techniques:
                result.reports.append(evaluate_bundle(bundle, units[t]))
        for kind in cfg.kinds:
            reg = {b.layout_id: b for s, b in zip(specs, bundles) if s.kind == kind}
            if not all(l in reg for l in (FeatureSetId.ALL72, FeatureSetId.NO6GHZ67, FeatureSetId.NO6GHZ_NONR40)):
                continue
            registry = ModelRegistry(reg)
            for t in cfg.techniques:
                rep, w = evaluate_adjustable(registry, units[t])
                result.reports.append(rep)
                result.weighted[rep.cell] = w
    return result


def reproduce(cfg: ReproduceConfig, out_dir: str | Path) -> ReproduceResult:
    """synth -> extract -> train -> evaluate -> reports, all under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gen = GeneratorConfig(seed=cfg.seed, sessions_per_label=cfg.sessions_per_label,
                          records_per_session=cfg.records_per_session,
                          **({"profiles": cfg.profiles} if cfg.profiles else {}))
    sessions = generate_dataset(gen)
    write_dataset_csv(sessions, out_dir / "dataset.csv")
    result = run_experiment(sessions, cfg)
    models_dir = out_dir / "models"
    models_dir.mkdir(exist_ok=True)
    for name, bundle in result.bundles.items():
        save_bundle(bundle, models_dir / f"{name}.bundle")
    emit_report(result.reports, out_dir / "reports",
                extra={"adjustable_session_weighted_accuracy": result.weighted})
    (out_dir / "experiment_config.json").write_text(json.dumps(cfg.to_json(), indent=1, sort_keys=True) + "\n",
                                             encoding="utf-8")
    write_manifest(out_dir)
    return result


def balance_matrix(matrix: FeatureMatrix, seed: int) -> FeatureMatrix:
    """Two-class view of a matrix: II/INW merged into I, I rows downsampled to the O count."""
    labels = [Label.I if l in (Label.II, Label.INW) else l for l in matrix.labels]
    o = [i for i, l in enumerate(labels) if l is Label.O]
    ind = [i for i, l in enumerate(labels) if l is Label.I]
    if not o:
        raise ValueError("cannot balance: matrix has no outdoor rows")
    if len(ind) > len(o):
        ind = sorted(np.random.default_rng(seed).choice(ind, size=len(o), replace=False).tolist())
    rows = sorted(o + ind)
    out = matrix.subset(rows)
    out.labels = [labels[i] for i in rows]
    return out


def holdout(matrix: FeatureMatrix, fraction: float, seed: int) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Stratified row split into (fit, held-out) parts."""
    rng = np.random.default_rng(seed)
    keep, held = [], []
    for lab in sorted({l for l in matrix.labels if l is not None}, key=lambda x: x.value):
        rows = np.array([i for i, l in enumerate(matrix.labels) if l is lab])
        rows = rows[rng.permutation(rows.size)]
        n = int(round(rows.size * fraction))
        held += rows[:n].tolist()
        keep += rows[n:].tolist()
    return matrix.subset(sorted(keep)), matrix.subset(sorted(held))

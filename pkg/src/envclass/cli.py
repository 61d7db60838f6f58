"""Command-line entry point: ``envclass <subcommand> ...``.

A ``--config`` JSON file overrides flags, flags override defaults, and the
resolved settings are written next to every output. When ``--out`` is
omitted, the ``ENVCLASS_OUT_DIR`` environment variable names the output
directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .adjustable import ModelRegistry, RegistryError, classify_adjustable, scan_bundles, write_predictions
from .evaluation import emit_report, merge_indoor
from .features import FeatureSetId, extract_matrix, fit_normalizer, read_matrix_csv, save_normalizer, write_matrix_csv
from .ingest import DEFAULT_RANGES, load_dataset, read_dataset_csv, read_labels, write_dataset_csv
from .models.bundle import MODEL_KINDS, load_bundle, save_bundle
from .models.dnn import TrainConfig
from .models.tree import TreeParams
from .pipeline import (ALL_LAYOUTS, ReproduceConfig, TrainSpec, balance_matrix, evaluate_adjustable,
                       evaluate_bundle, holdout, reproduce, train_bundle, write_manifest)
from .synth import GeneratorConfig, default_profiles, generate_dataset, load_profile_overrides
from .windowing import Technique, build_units, partition_windows

logger = logging.getLogger("envclass")

OUT_ENV = "ENVCLASS_OUT_DIR"
LAYOUT_CHOICES = [l.value for l in FeatureSetId]

# default file name used under $ENVCLASS_OUT_DIR; None marks directory outputs
OUT_DEFAULTS = {
    "ingest": "dataset.csv", "extract": "matrix.csv", "train": "model.bundle",
    "evaluate": None, "predict": "predictions.csv", "window-eval": "report.json",
    "synth": "dataset.csv", "reproduce": None,
}

REQUIRED = {
    "ingest": ("input", "labels"),
    "extract": ("dataset", "layout"),
    "train": ("matrix", "model", "classes", "layout", "seed"),
    "evaluate": ("registry", "dataset", "classes"),
    "predict": ("registry", "input"),
    "window-eval": ("dataset", "bundle", "technique"),
    "synth": ("seed",),
    "reproduce": ("seed",),
}


class CliError(Exception):
    pass


def _techniques(text: str) -> list[Technique]:
    try:
        return [Technique(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _tree_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model hyperparameters")
    g.add_argument("--max-depth", type=int, default=10, help="tree depth limit (default 10)")
    g.add_argument("--min-samples-leaf", type=int, default=10, help="smallest tree leaf (default 10)")
    g.add_argument("--feature-mode", choices=["per_split", "per_tree"], default="per_split",
                   help="random forest feature sampling (default per_split)")
    g.add_argument("--epochs", type=int, default=200, help="DNN epoch limit (default 200)")
    g.add_argument("--learning-rate", type=float, default=1e-3, help="Adam step size (default 0.001)")
    g.add_argument("--batch-size", type=int, default=64, help="DNN mini-batch (default 64)")
    g.add_argument("--patience", type=int, default=10, help="early-stopping patience (default 10)")


def _profile_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profiles", help="JSON file with environment profile overrides")
    p.add_argument("--invert-horizontal-accuracy", action="store_true",
                   help="swap outdoor and indoor horizontal GPS accuracy profiles")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file whose keys override command-line flags")
    common.add_argument("--out", help=f"output target (default: under ${OUT_ENV})")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="envclass",
                                     description="Indoor/outdoor environment classification toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse labeled JSON exports into a dataset CSV")
    p.add_argument("--input", help="directory of JSON export files")
    p.add_argument("--labels", help="CSV with path,label[,location]; paths relative to --input")
    p.add_argument("--include-unknown-sim", action="store_true", help="keep records of unknown carriers")

    p = sub.add_parser("extract", parents=[common], help="compute a feature matrix from a dataset")
    p.add_argument("--dataset", help="dataset CSV")
    p.add_argument("--layout", choices=LAYOUT_CHOICES, help="feature layout")

    p = sub.add_parser("train", parents=[common], help="train one model bundle from a feature matrix")
    p.add_argument("--matrix", help="feature matrix CSV")
    p.add_argument("--model", choices=list(MODEL_KINDS), help="model kind")
    p.add_argument("--classes", type=int, choices=[2, 3], help="class count")
    p.add_argument("--layout", choices=LAYOUT_CHOICES, help="feature layout to train on")
    p.add_argument("--seed", type=int, help="random seed (required)")
    p.add_argument("--validation-fraction", type=float, default=0.2,
                   help="rows held out for DNN model selection (default 0.2)")
    _tree_flags(p)

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a registry of bundles on a dataset")
    p.add_argument("--registry", help="directory of .bundle files")
    p.add_argument("--dataset", help="labeled dataset CSV")
    p.add_argument("--classes", type=int, choices=[2, 3], help="class count")
    p.add_argument("--techniques", type=_techniques, default=_techniques("none,mv,da"),
                   help="comma-separated subset of none,mv,da (default all)")

    p = sub.add_parser("predict", parents=[common], help="adjustable classification of a dataset")
    p.add_argument("--registry", help="directory of .bundle files")
    p.add_argument("--input", help="dataset CSV")
    p.add_argument("--technique", choices=[t.value for t in Technique], default="none",
                   help="decision technique (default none)")
    p.add_argument("--model", choices=list(MODEL_KINDS), help="model kind when the registry holds several")
    p.add_argument("--classes", type=int, choices=[2, 3], help="class count when the registry holds several")

    p = sub.add_parser("window-eval", parents=[common], help="windowed evaluation of one bundle")
    p.add_argument("--dataset", help="labeled dataset CSV")
    p.add_argument("--bundle", help="model bundle")
    p.add_argument("--technique", choices=["mv", "da"], help="window technique")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic labeled dataset")
    p.add_argument("--seed", type=int, help="random seed (required)")
    p.add_argument("--sessions-per-label", type=int, default=50, help="sessions per label (default 50)")
    p.add_argument("--records", type=int, default=60, help="records per session (default 60)")
    _profile_flags(p)

    p = sub.add_parser("reproduce", parents=[common], help="run the full synthetic experiment")
    p.add_argument("--seed", type=int, help="random seed (required)")
    p.add_argument("--sessions-per-label", type=int, default=50, help="sessions per label (default 50)")
    p.add_argument("--records", type=int, default=60, help="records per session (default 60)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="concurrent model trainings (default: available cores)")
    _profile_flags(p)
    _tree_flags(p)
    return parser


def _apply_config(parser, sub_parser, args) -> dict:
    """Overlay ``--config`` keys onto parsed flags; return the resolved settings."""
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise CliError("config file must hold a JSON object")
        for key, value in doc.items():
            dest = key.replace("-", "_")
            if dest in ("command", "config") or not hasattr(args, dest):
                sub_parser.error(f"unknown config key {key!r} for {args.command}")
            if dest == "techniques" and isinstance(value, str):
                value = _techniques(value)
            setattr(args, dest, value)
    missing = [f"--{k.replace('_', '-')}" for k in REQUIRED[args.command] if getattr(args, k) is None]
    if missing:
        sub_parser.error("the following arguments are required: " + ", ".join(missing))
    if args.out is None:
        env = os.environ.get(OUT_ENV)
        if not env:
            sub_parser.error(f"the following arguments are required: --out (or set {OUT_ENV})")
        default = OUT_DEFAULTS[args.command]
        args.out = env if default is None else str(Path(env) / default)
    # the output path itself is left out so that reruns elsewhere compare equal
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "verbose", "out")}
    if "techniques" in resolved:
        resolved["techniques"] = [t.value for t in resolved["techniques"]]
    return resolved


def _echo_config(resolved: dict, out: Path) -> None:
    """Write the resolved settings into (or next to) the output target."""
    target = out / "run_config.json" if out.is_dir() else out.with_name(out.name + ".config.json")
    target.write_text(json.dumps(resolved, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _tree_params(args) -> TreeParams:
    return TreeParams(max_depth=args.max_depth, min_samples_leaf=args.min_samples_leaf)


def _train_config(args) -> TrainConfig:
    return TrainConfig(learning_rate=args.learning_rate, batch_size=args.batch_size,
                       max_epochs=args.epochs, patience=args.patience)


def _profiles(args):
    if args.profiles:
        profiles = load_profile_overrides(args.profiles)
        if args.invert_horizontal_accuracy:
            raise CliError("put invert_horizontal_accuracy inside the profiles file when using --profiles")
        return profiles
    return default_profiles(args.invert_horizontal_accuracy) if args.invert_horizontal_accuracy else None


def _parent(out: Path) -> Path:
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args, out: Path) -> None:
    root = Path(args.input)
    if not root.is_dir():
        raise CliError(f"input directory {root} does not exist")
    labels = {str(Path(k).resolve()): v for k, v in read_labels(args.labels, base=root).items()}
    files = sorted(p.resolve() for p in root.rglob("*.json"))
    for key in labels:
        if not Path(key).exists():
            raise CliError(f"labeled file {key} does not exist")
    unlabeled = [p for p in files if str(p) not in labels]
    for p in unlabeled:
        logger.warning("skipping unlabeled export %s", p)
    chosen = [p for p in files if str(p) in labels]
    if not chosen:
        raise CliError(f"no labeled JSON exports under {root}")
    reports = []
    sessions = load_dataset(chosen, labels, DEFAULT_RANGES, args.include_unknown_sim, reports)
    write_dataset_csv(sessions, _parent(out))
    for r in reports:
        logger.info("%s: %d records kept, %d rejected", r.session_id, r.records, r.rejected)


def cmd_extract(args, out: Path) -> None:
    sessions = read_dataset_csv(args.dataset)
    matrix = extract_matrix(sessions, args.layout)
    if len(matrix) == 0:
        raise CliError("dataset has no records")
    write_matrix_csv(matrix, _parent(out))
    save_normalizer(fit_normalizer(matrix.values, matrix.layout_id), out.with_name(out.name + ".normalizer.json"))


def cmd_train(args, out: Path) -> None:
    matrix = read_matrix_csv(args.matrix)
    if any(l is None for l in matrix.labels):
        raise CliError("training matrix has unlabeled rows")
    matrix = matrix.project(args.layout)
    if args.classes == 2:
        matrix = balance_matrix(matrix, args.seed)
    validation = None
    if args.model == "dnn":
        matrix, validation = holdout(matrix, args.validation_fraction, args.seed)
    spec = TrainSpec(args.model, FeatureSetId(args.layout), args.classes, args.seed,
                     _tree_params(args), _train_config(args), args.feature_mode)
    bundle = train_bundle(matrix, validation, spec)
    save_bundle(bundle, _parent(out))


def _registry_bundles(path, n_classes: int | None):
    bundles = scan_bundles(path, None, n_classes)
    if not bundles:
        raise RegistryError(f"registry {path} has no bundles" + (f" for {n_classes} classes" if n_classes else ""))
    return bundles


def _dataset_for(sessions, n_classes: int):
    return merge_indoor(sessions) if n_classes == 2 else sessions


def cmd_evaluate(args, out: Path) -> None:
    bundles = _registry_bundles(args.registry, args.classes)
    by_kind: dict[str, dict] = {}
    for b in bundles:
        by_kind.setdefault(b.kind, {})[b.layout_id] = b
    for kind in sorted(by_kind):
        for lid in ALL_LAYOUTS:
            if lid not in by_kind[kind]:
                raise RegistryError(f"registry has no {kind} bundle for layout {lid.value}")
    sessions = _dataset_for(read_dataset_csv(args.dataset), args.classes)
    units = {t: build_units(sessions, t) for t in args.techniques}
    reports, weighted = [], {}
    for kind in [k for k in MODEL_KINDS if k in by_kind]:
        for lid in ALL_LAYOUTS:
            for t in args.techniques:
                reports.append(evaluate_bundle(by_kind[kind][lid], units[t]))
        registry = ModelRegistry(by_kind[kind])
        for t in args.techniques:
            rep, w = evaluate_adjustable(registry, units[t])
            reports.append(rep)
            weighted[rep.cell] = w
    emit_report(reports, out, extra={"adjustable_session_weighted_accuracy": weighted})


def cmd_predict(args, out: Path) -> None:
    bundles = _registry_bundles(args.registry, args.classes)
    if args.model:
        bundles = [b for b in bundles if b.kind == args.model]
    kinds = sorted({(b.kind, len(b.classes)) for b in bundles})
    if len(kinds) != 1:
        raise RegistryError("registry holds " + (", ".join(f"{k}/{n}-class" for k, n in kinds) or "no matching bundles")
                            + "; choose one with --model and --classes")
    registry = ModelRegistry({b.layout_id: b for b in bundles})
    preds = classify_adjustable(read_dataset_csv(args.input), registry, args.technique)
    write_predictions(preds, _parent(out))


def cmd_window_eval(args, out: Path) -> None:
    bundle = load_bundle(args.bundle)
    sessions = _dataset_for(read_dataset_csv(args.dataset), len(bundle.classes))
    units = build_units(sessions, args.technique)
    if len(units) == 0:
        raise CliError("dataset yields no complete windows")
    report = evaluate_bundle(bundle, units)
    parts = [partition_windows(s) for s in sessions]
    doc = report.to_json()
    doc["windows"] = {"evaluated": len(units), "gapped": sum(p.gapped for p in parts),
                      "discarded_records": sum(p.discarded for p in parts)}
    _parent(out).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def cmd_synth(args, out: Path) -> None:
    profiles = _profiles(args)
    cfg = GeneratorConfig(seed=args.seed, sessions_per_label=args.sessions_per_label,
                          records_per_session=args.records, **({"profiles": profiles} if profiles else {}))
    write_dataset_csv(generate_dataset(cfg), _parent(out))


def cmd_reproduce(args, out: Path) -> None:
    cfg = ReproduceConfig(seed=args.seed, sessions_per_label=args.sessions_per_label,
                          records_per_session=args.records, jobs=args.jobs,
                          dnn=_train_config(args), profiles=_profiles(args))
    reproduce(cfg, out)


COMMANDS = {
    "ingest": cmd_ingest, "extract": cmd_extract, "train": cmd_train, "evaluate": cmd_evaluate,
    "predict": cmd_predict, "window-eval": cmd_window_eval, "synth": cmd_synth, "reproduce": cmd_reproduce,
}


def _error_line(exc: BaseException) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        sub_parser = parser._subparsers._group_actions[0].choices[args.command]
        resolved = _apply_config(parser, sub_parser, args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except CliError as exc:
        print(_error_line(exc), file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        COMMANDS[args.command](args, out)
        _echo_config(resolved, out)
        if OUT_DEFAULTS[args.command] is None:
            write_manifest(out)
    except Exception as exc:  # one machine-parsable line per failure
        logger.debug("command failed", exc_info=True)
        print(_error_line(exc), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

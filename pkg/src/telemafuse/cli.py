"""Command-line entry point: ``telemafuse synth|extract|train|predict|evaluate``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .artifact import load_artifact, make_artifact, save_artifact
from .config import PipelineConfig, load_config
from .errors import ConfigError, DataError, OutputError, TelemafuseError, ValidationError
from .evaluation import run_experiment
from .features import (FeatureMatrix, extract_features, read_feature_csv, select_features,
                       write_feature_csv, write_selection_report)
from .forest import labels_from_proba
from .fusion import fuse_predict, member_probabilities
from .ingest import HEADER, BinaryLabel, downsample_to_1hz, parse_trip_csv, validate_stream
from .pipeline import fit_fusion
from .synth import cmd_synth

log = logging.getLogger("telemafuse")


# ---- commands ---------------------------------------------------------------

def load_trip_features(path, cfg: PipelineConfig) -> FeatureMatrix:
    """parse, validate, downsample, window and summarize a trip CSV."""
    streams = parse_trip_csv(path)
    for s in streams:
        report = validate_stream(s)
        if not report.ok:
            first = report.violations[0]
            raise ValidationError(f"{path}: trip {s.trip_id!r}: {len(report.violations)} "
                                  f"violation(s), first: {first}")
    return extract_features((downsample_to_1hz(s) for s in streams), cfg.window, cfg.features)


def cmd_extract(cfg: PipelineConfig, in_path, out_path, report_path=None) -> FeatureMatrix:
    fm = load_trip_features(in_path, cfg)
    _write(write_feature_csv, fm, out_path)
    if cfg.selection == "global":
        if not fm.labeled:
            raise DataError("global selection needs labeled trips")
        report = select_features(fm, cfg.variance_threshold, cfg.correlation_threshold)
        target = report_path or Path(out_path).with_suffix(".selection.csv")
        _write(write_selection_report, report, target)
    return fm


def cmd_train(cfg: PipelineConfig, features_path, model_path):
    train = read_feature_csv(features_path)
    if not train.labeled:
        raise DataError(f"{features_path}: training rows must all carry a label")
    fitted = fit_fusion(train, cfg)
    art = make_artifact(fitted, train, cfg)
    save_artifact(art, model_path)
    return art


PREDICTION_HEADER = ["trip_id", "driver_id", "label", "score", "C0", "C1",
                     "forest_1", "forest_2", "forest_3"]


def cmd_predict(model_path, features_path, out_path) -> int:
    art = load_artifact(model_path)
    fm = read_feature_csv(features_path)
    fm.project(art.required_features)  # raises SchemaError naming the first gap
    h = member_probabilities(art.ensemble, fm)
    try:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PREDICTION_HEADER[:6] + [f"forest_{i + 1}" for i in range(h.shape[1])])
            for i, row in enumerate(h):
                res = fuse_predict(art.ensemble, row)
                members = [BinaryLabel(int(k)).text for k in labels_from_proba(row)]
                w.writerow([fm.trip_ids[i], fm.driver_ids[i], res.label.text, repr(res.score),
                            repr(res.integrals[0]), repr(res.integrals[1]), *members])
    except OSError as exc:
        raise OutputError(f"cannot write {out_path}: {exc.strerror}") from None
    return len(fm)


def _is_trip_csv(path) -> bool:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), [])
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    return tuple(h.strip() for h in header) == HEADER


def cmd_evaluate(cfg: PipelineConfig, in_path, out_dir):
    fm = load_trip_features(in_path, cfg) if _is_trip_csv(in_path) else read_feature_csv(in_path)
    report = run_experiment(fm, cfg)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(report.to_csv(), encoding="utf-8")
        (out / "metrics.txt").write_text(report.to_table(), encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write report to {out_dir}: {exc.strerror}") from None
    return report


def _write(fn, obj, path):
    try:
        fn(obj, path)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None


# ---- argument handling ------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="INI config file (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--split", choices=["by-driver", "by-window"])
    p.add_argument("--ranking", choices=["oob", "resubstitution"])
    p.add_argument("--selection", choices=["per-fold", "global"])
    p.add_argument("--fidelity-paper", action="store_true",
                   help="resubstitution ranking, global selection, window-level folds")
    p.add_argument("--jobs", type=int, help="worker threads for forest training")
    p.add_argument("--iterations", type=int, help="number of feature subsets K")
    p.add_argument("--max-features", type=int, help="features per subset F")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="telemafuse",
                                     description="Gender classification from trip telemetry.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write synthetic trips")
    p.add_argument("--out", required=True)
    p.add_argument("--drivers-per-class", type=int)
    p.add_argument("--duration", type=int, help="trip length in seconds")
    p.add_argument("--separation", type=float, help="scale of class offsets (0 = no signal)")

    p = sub.add_parser("extract", parents=[common], help="trip CSV to feature CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="selection report path (global selection only)")

    p = sub.add_parser("train", parents=[common], help="fit and save a fused model")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", parents=[common], help="apply a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="k-fold cross-validation report")
    p.add_argument("--input", required=True, help="trip CSV or feature CSV")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.fidelity_paper:
        cfg = cfg.fidelity_paper()
    try:
        if args.split:
            cfg = replace(cfg, split_mode=args.split)
        if args.ranking:
            cfg = replace(cfg, bagging=replace(cfg.bagging, ranking_mode=args.ranking))
        if args.selection:
            cfg = replace(cfg, selection=args.selection)
        if args.jobs is not None:
            cfg = replace(cfg, n_jobs=args.jobs)
        if args.iterations is not None:
            cfg = replace(cfg, bagging=replace(cfg.bagging, max_iterations=args.iterations))
        if args.max_features is not None:
            cfg = replace(cfg, bagging=replace(cfg.bagging, max_features=args.max_features))
        synth = cfg.synth
        if getattr(args, "drivers_per_class", None) is not None:
            synth = replace(synth, n_drivers_per_class=args.drivers_per_class)
        if getattr(args, "duration", None) is not None:
            synth = replace(synth, duration_s=args.duration)
        if getattr(args, "separation", None) is not None:
            synth = replace(synth, separation=args.separation)
        cfg = replace(cfg, synth=synth)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return cfg


def run(args: argparse.Namespace) -> None:
    cfg = resolve_config(args)
    if args.command == "synth":
        if cfg.synth.duration_s < 2 * cfg.window.length_s:
            log.warning("trip duration %d s is under two windows of %d s",
                        cfg.synth.duration_s, cfg.window.length_s)
        n = cmd_synth(cfg.synth, args.out)
        print(f"wrote {n} trips to {args.out}")
    elif args.command == "extract":
        fm = cmd_extract(cfg, args.input, args.out, args.report)
        print(f"wrote {len(fm)} windows x {len(fm.feature_names)} features to {args.out}")
    elif args.command == "train":
        art = cmd_train(cfg, args.features, args.out)
        print(f"wrote model with {len(art.subsets)} forests to {args.out}")
    elif args.command == "predict":
        n = cmd_predict(args.model, args.features, args.out)
        print(f"wrote {n} predictions to {args.out}")
    elif args.command == "evaluate":
        report = cmd_evaluate(cfg, args.input, args.out)
        sys.stdout.write(report.to_table())


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except TelemafuseError as exc:
        msg = " ".join(str(exc).split())
        print(f"error code={exc.code} message={msg}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error code=IO message=no such file: {exc.filename}", file=sys.stderr)
        return DataError.exit_code
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"error code=NUMERIC message={exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())

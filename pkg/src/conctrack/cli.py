"""Command-line pipeline driver.

Subcommands cover each stage plus a one-shot end-to-end run:

    synth       generate labeled synthetic trace files
    preprocess  trace files -> windowed feature CSV (optionally 2D histograms)
    train       feature CSV -> model file + k-fold accuracy report
    recognize   feature CSV + model -> per-window recognition levels
    estimate    recognition CSV -> Kalman-filtered estimation levels
    fit         series CSV -> bimodal fit report + fit curve
    run         trace + model -> features, series, fit report, fit curve

Every output is deterministic under a fixed config and seed, is written
atomically, and carries the effective config echoed into its header.
Exit codes: 0 success, 2 input/parse error, 3 data-validity error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bimodal, features, kalman, keypoints, mlp, synth
from .config import PipelineConfig, config_echo, load_pipeline_config, override_seed
from .errors import ConcTrackError, DataError, InputFormatError, NumericError
from .util import atomic_write_text

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _out_dir(args: argparse.Namespace, config: PipelineConfig) -> Path:
    out = Path(args.out) if args.out is not None else Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _label_name(label: int | None) -> str:
    return {1: "high", 0: "low", None: "unlabeled"}[label]


def cmd_synth(args: argparse.Namespace, config: PipelineConfig) -> int:
    traces = synth.generate_dataset(config.synth, args.traces_per_class)
    out = _out_dir(args, config)
    counters = {0: 0, 1: 0}
    for trace in traces:
        index = counters[trace.label]
        counters[trace.label] += 1
        path = out / f"trace_{_label_name(trace.label)}_{index:03d}.jsonl"
        keypoints.save_trace(trace, path)
        print(f"wrote {path} ({len(trace)} frames, label {trace.label})")
    return EXIT_OK


def cmd_preprocess(args: argparse.Namespace, config: PipelineConfig) -> int:
    echo = config_echo(config)
    out = _out_dir(args, config)
    all_features: list[features.FeatureVector] = []
    all_labels: list[int | None] = []
    kept = 0
    dropped = 0
    for trace_path in args.traces:
        trace = keypoints.load_trace(trace_path)
        vectors, n_dropped = features.extract_features(trace, config.features)
        all_features.extend(vectors)
        all_labels.extend([trace.label] * len(vectors))
        kept += len(vectors)
        dropped += n_dropped
        if args.hist2d:
            grid = features.emit_2d_histogram(
                trace, args.hist2d_bins, confidence_threshold=config.features.confidence_threshold
            )
            hist_path = out / f"{Path(trace_path).stem}_hist2d.csv"
            features.write_hist2d_csv(hist_path, grid, config_echo=echo)
            print(f"wrote {hist_path}")
    features_path = out / args.features_name
    features.write_features_csv(features_path, all_features, all_labels, config_echo=echo)
    print(f"wrote {features_path} ({kept} windows kept, {dropped} dropped)")
    return EXIT_OK


def _load_labeled_matrix(path: str) -> tuple[np.ndarray, np.ndarray]:
    vectors, labels = features.read_features_csv(path)
    if not vectors:
        raise DataError(f"{path}: no feature rows")
    if any(label is None for label in labels):
        raise DataError(f"{path}: training requires a label on every row")
    return features.feature_matrix(vectors), np.array(labels, dtype=np.float64)


def cmd_train(args: argparse.Namespace, config: PipelineConfig) -> int:
    train_config = config.train
    if args.folds is not None:
        train_config = replace(train_config, folds=args.folds)
    x, y = _load_labeled_matrix(args.features)
    if np.unique(y).size < 2:
        raise DataError(f"{args.features}: training requires both classes to be present")

    folds = mlp.kfold_cv(x, y, train_config)
    result = mlp.train(x, y, train_config)

    out = _out_dir(args, config)
    echo = config_echo(config)
    model_path = out / args.model_name
    mlp.save_model(result.model, model_path, train_config)
    report_path = out / "fold_report.json"
    report = {
        "folds": train_config.folds,
        "fold_accuracies": list(folds.fold_accuracies),
        "median_accuracy": folds.median_accuracy,
        "stratified": folds.stratified,
        "final_epoch_loss": result.epoch_losses[-1],
        "config": json.loads(echo),
    }
    atomic_write_text(report_path, json.dumps(report, indent=2) + "\n")
    for j, accuracy in enumerate(folds.fold_accuracies):
        print(f"fold {j}: accuracy {accuracy:.4f}")
    print(f"median accuracy: {folds.median_accuracy:.4f}")
    print(f"wrote {model_path}")
    print(f"wrote {report_path}")
    return EXIT_OK


def cmd_recognize(args: argparse.Namespace, config: PipelineConfig) -> int:
    vectors, _ = features.read_features_csv(args.features)
    if not vectors:
        raise DataError(f"{args.features}: no feature rows")
    model, _ = mlp.load_model(args.model)
    series = mlp.predict_series(model, vectors)
    out = _out_dir(args, config)
    path = out / args.series_name
    kalman.write_series_csv(
        path, [v.window_index for v in vectors], series, config_echo=config_echo(config)
    )
    print(f"wrote {path} ({len(series)} windows)")
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace, config: PipelineConfig) -> int:
    columns = kalman.read_series_csv(args.series)
    if not columns["window_index"]:
        raise DataError(f"{args.series}: no series rows")
    recognition = mlp.RecognitionSeries(
        values=tuple(columns["s_r"]), t_seconds=tuple(columns["t_seconds"])
    )
    estimation = kalman.run_filter(recognition, config.kalman)
    out = _out_dir(args, config)
    path = out / args.series_name
    kalman.write_series_csv(
        path, columns["window_index"], recognition, estimation, config_echo=config_echo(config)
    )
    print(f"wrote {path} ({len(estimation)} windows)")
    return EXIT_OK


def _fit_and_write(
    values: list[float], out: Path, config: PipelineConfig, echo: str
) -> bimodal.BimodalFit:
    hist = bimodal.build_histogram(values, config.fit.bins)
    fit = bimodal.fit_bimodal(hist, config=config.fit)
    bimodal.write_fit_report(
        out / "fit_report.json",
        fit,
        bins=config.fit.bins,
        sample_count=hist.sample_count,
        config_echo=echo,
    )
    bimodal.write_fit_curve(
        out / "fit_curve.csv", fit, points=config.fit.curve_points, config_echo=echo
    )
    return fit


def cmd_fit(args: argparse.Namespace, config: PipelineConfig) -> int:
    columns = kalman.read_series_csv(args.series)
    if args.column not in columns:
        raise InputFormatError(f"series file has no column {args.column!r}", source=args.series)
    values = columns[args.column]
    if not values:
        raise DataError(f"{args.series}: no series rows")
    out = _out_dir(args, config)
    fit = _fit_and_write(values, out, config, config_echo(config))
    print(
        f"fit over {args.column}: mu1={fit.mu1:.4f} mu2={fit.mu2:.4f} "
        f"converged={fit.converged} iterations={fit.iterations}"
    )
    print(f"wrote {out / 'fit_report.json'}")
    print(f"wrote {out / 'fit_curve.csv'}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace, config: PipelineConfig) -> int:
    echo = config_echo(config)
    out = _out_dir(args, config)
    trace = keypoints.load_trace(args.trace)
    vectors, dropped = features.extract_features(trace, config.features)
    if not vectors:
        raise DataError(f"{args.trace}: no complete feature windows")
    model, _ = mlp.load_model(args.model)

    recognition = mlp.predict_series(model, vectors)
    estimation = kalman.run_filter(recognition, config.kalman)

    features_path = out / "features.csv"
    features.write_features_csv(features_path, vectors, [trace.label] * len(vectors), config_echo=echo)
    series_path = out / "series.csv"
    kalman.write_series_csv(
        series_path, [v.window_index for v in vectors], recognition, estimation, config_echo=echo
    )
    fit = _fit_and_write(list(estimation.values), out, config, echo)

    print(f"wrote {features_path} ({len(vectors)} windows kept, {dropped} dropped)")
    print(f"wrote {series_path}")
    print(f"wrote {out / 'fit_report.json'} (mu1={fit.mu1:.4f}, mu2={fit.mu2:.4f})")
    print(f"wrote {out / 'fit_curve.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conctrack",
        description="Concentration-level estimation pipeline over body-keypoint traces.",
    )
    parser.add_argument("--config", default=None, help="path to a JSON pipeline config")
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate labeled synthetic traces")
    p.add_argument("--traces-per-class", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="extract windowed features from traces")
    p.add_argument("traces", nargs="+", help="canonical trace files")
    p.add_argument("--features-name", default="features.csv")
    p.add_argument("--hist2d", action="store_true", help="also write a 2D keypoint histogram per trace")
    p.add_argument("--hist2d-bins", type=int, default=40)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train the classifier with k-fold cross validation")
    p.add_argument("features", help="labeled feature CSV")
    p.add_argument("--model-name", default="model.json")
    p.add_argument("--folds", type=int, default=None, help="override fold count")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recognize", help="apply a trained model to feature windows")
    p.add_argument("features", help="feature CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--series-name", default="recognition.csv")
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("estimate", help="Kalman-filter a recognition series")
    p.add_argument("series", help="recognition CSV (window_index,t_seconds,s_r)")
    p.add_argument("--series-name", default="series.csv")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("fit", help="fit the two-Gaussian model to a series column")
    p.add_argument("series", help="series CSV")
    p.add_argument("--column", default="s_e", choices=("s_r", "s_e"))
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("run", help="full pipeline over one trace")
    p.add_argument("trace", help="canonical trace file")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_pipeline_config(args.config)
        if args.seed is not None:
            config = override_seed(config, args.seed)
        return args.func(args, config)
    except InputFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConcTrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``catseq synth | train | detect | eval``.

Exit codes: 0 success, 2 bad usage or configuration, 3 unreadable or
malformed input files, 4 schema mismatch between artifacts, 5 training
divergence.
"""

import argparse
import json
import os
import sys

import numpy as np
import pandas as pd

from .bundle import RunConfig, detect_bundle, evaluate_report, train_bundle, write_metrics
from .evaluation import load_truths, save_truths
from .synthetic import SyntheticSpec, generate_synthetic

EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_SCHEMA = 4
EXIT_DIVERGED = 5


def read_series_csv(path) -> pd.DataFrame:
    """Load a series CSV: first column is the time index, the rest sensors."""
    frame = pd.read_csv(path, dtype=str)
    if frame.shape[1] < 2:
        raise ValueError("series CSV needs a time column plus at least one sensor")
    time_col = frame.columns[0]
    try:
        index = frame[time_col].astype(np.int64)
    except (TypeError, ValueError):
        index = pd.RangeIndex(len(frame))  # ISO or other labels: ordinal positions
    out = frame.drop(columns=[time_col])
    out.index = pd.Index(index, name="time")
    return out


def write_series_csv(frame: pd.DataFrame, path):
    frame.to_csv(path, index=True, index_label="time")


def _load_config(args) -> RunConfig:
    data = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
    for key, attr in (("model", "model"), ("alpha", "alpha"), ("word_length", "wordl"), ("seed", "seed")):
        value = getattr(args, attr, None)
        if value is not None:
            data[key] = value
    return RunConfig.from_json_dict(data)


def cmd_synth(args) -> int:
    with open(args.spec, encoding="utf-8") as fh:
        spec = SyntheticSpec.from_json_dict(json.load(fh))
    train, test, truths = generate_synthetic(spec, seed=args.seed if args.seed is not None else 0)
    out = args.out
    os.makedirs(out, exist_ok=True)
    write_series_csv(train, os.path.join(out, "train.csv"))
    write_series_csv(test, os.path.join(out, "test.csv"))
    save_truths(truths, os.path.join(out, "truths.json"))
    print(f"wrote train.csv, test.csv, truths.json to {out}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    frame = read_series_csv(args.train)
    train_bundle(config, frame, args.out)
    print(f"bundle written to {args.out}")
    return 0


def cmd_detect(args) -> int:
    frame = read_series_csv(args.test)
    report = detect_bundle(args.bundle, frame, args.out)
    print(f"{len(report['events'])} event(s); report written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    with open(args.events, encoding="utf-8") as fh:
        report = json.load(fh)
    truths = load_truths(args.truths)
    metrics = evaluate_report(
        report,
        truths,
        series_length=args.series_length,
        tolerance_frac=args.tolerance,
    )
    write_metrics(metrics, args.out, label=args.label)
    print(
        f"tp={metrics['tp']} fp={metrics['fp']} fn={metrics['fn']} "
        f"F1={metrics['f1_display']:.2f} F0.5={metrics['f0_5_display']:.2f}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catseq",
        description="Anomaly detection for categorical time series via an NLP corpus view.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a ground-truthed synthetic train/test pair")
    p.add_argument("--spec", required=True, help="generator spec JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model bundle on a nominal series")
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--train", required=True, help="training series CSV")
    p.add_argument("--out", required=True, help="bundle directory")
    p.add_argument("--model", choices=["svd", "transformer", "lstm"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--wordl", type=int, help="word length override")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="score a series against a bundle and emit a report")
    p.add_argument("--bundle", required=True, help="bundle directory from `catseq train`")
    p.add_argument("--test", required=True, help="series CSV to score")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score a detection report against ground truth")
    p.add_argument("--events", required=True, help="events.json from `catseq detect`")
    p.add_argument("--truths", required=True, help="ground truth JSON")
    p.add_argument("--series-length", type=int, default=None)
    p.add_argument("--tolerance", type=float, default=0.01, help="start-match tolerance fraction")
    p.add_argument("--label", default="run", help="row label in the metrics table")
    p.add_argument("--out", required=True, help="metrics directory")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (json.JSONDecodeError, pd.errors.ParserError, KeyError) as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED if "diverged" in str(exc) else 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA if "schema mismatch" in str(exc) else EXIT_CONFIG
    except Exception as exc:  # pragma: no cover - last resort
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command line interface: train, eval, bench, synth.

Exit codes: 0 success, 2 configuration problems, 3 data problems,
4 numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys

from .dataset import exclude_artifacts, load_trials, store_trials, synth_trials
from .errors import ConfigError, DataError, NumericError
from .pipeline import (
    ExperimentConfig,
    discover_subjects,
    evaluate,
    fit,
    load_model,
    run_benchmark,
    save_model,
)

_CONFIG_KEYS = ("feature", "windows", "bands", "mean", "kernel",
                "c_grid", "folds", "seed")


def parse_config_file(path):
    """Read a flat ``key=value`` experiment description."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    fields = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {text!r}")
        key, _, value = text.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in fields:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        fields[key] = value
    for required in ("feature", "windows", "bands", "kernel"):
        if required not in fields:
            raise ConfigError(f"{path}: missing required key {required!r}")
    try:
        if "c_grid" in fields:
            fields["c_grid"] = tuple(
                float(v) for v in fields["c_grid"].split(",") if v.strip())
        if "folds" in fields:
            fields["folds"] = int(fields["folds"])
        if "seed" in fields:
            fields["seed"] = int(fields["seed"])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ExperimentConfig(**fields)


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _cmd_train(args):
    config = parse_config_file(args.config)
    train, _ = exclude_artifacts(load_trials(args.infile))
    model = fit(config, train, n_jobs=args.jobs)
    save_model(model, args.out)
    print(f"trained {config.feature}/{config.windows}/{config.bands} "
          f"({model.feature_dim} features), C={model.svm.C:g}, "
          f"{model.train_time_s:.2f} s -> {args.out}")
    return 0


def _cmd_eval(args):
    model = load_model(args.model)
    test, _ = exclude_artifacts(load_trials(args.infile))
    report = evaluate(model, test, n_jobs=args.jobs)
    _write_json(args.report, report.to_dict())
    row = report.results[0]
    print(f"{row.subject_id or args.infile}: {row.accuracy:.2f}% "
          f"({row.n_correct}/{row.n_total}), test {row.test_time_s:.2f} s")
    return 0


def _cmd_bench(args):
    config = parse_config_file(args.config)
    pairs = discover_subjects(args.data_dir)
    if not pairs:
        raise DataError(f"no *T.mitrials/*E.mitrials pairs found in {args.data_dir}")
    report = run_benchmark(config, pairs, n_jobs=args.jobs)
    _write_json(args.report, report.to_dict())
    for row in report.results:
        print(f"{row.subject_id}: {row.accuracy:.2f}% "
              f"(train {row.train_time_s:.2f} s, test {row.test_time_s:.2f} s)")
    print(f"mean {report.mean_accuracy:.2f} +/- {report.std_accuracy:.2f} "
          f"over {len(report.results)} subjects")
    return 0


def _cmd_synth(args):
    ts = synth_trials(seed=args.seed, n_per_class=args.n_per_class,
                      snr_db=args.snr, subject_id=args.subject_id)
    store_trials(ts, args.out)
    print(f"wrote {ts.n_trials} trials ({ts.n_channels} ch, "
          f"{ts.n_samples} samples) -> {args.out}")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mi",
        description="Motor-imagery EEG classification: multiscale CSP and "
                    "Riemannian tangent-space features with an SVM backend.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on one session file")
    p.add_argument("--config", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model on a session file")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="train/test every subject in a directory")
    p.add_argument("--config", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("synth", help="generate a synthetic session file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--snr", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-class", type=int, default=72)
    p.add_argument("--subject-id", default="synthetic")
    p.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

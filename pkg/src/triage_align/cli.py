"""Command-line entry point.

Every flag mirrors a run-config key and wins over the config file. All
commands exit nonzero on validation errors and write outputs atomically.
"""

from __future__ import annotations

import argparse
import sys

from .alerts import IngestionError
from .config import ConfigError, RunConfig
from .study import StudyError
from . import pipeline


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run-config file")
    p.add_argument("--seed", type=int, dest="seed")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument(
        "--deterministic",
        action="store_const",
        const=True,
        dest="deterministic",
        help="suppress timestamp comment lines in outputs",
    )


def _add_data_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train", dest="train_path")
    p.add_argument("--test", dest="test_path")
    p.add_argument("--train-scores", dest="train_scores_path")
    p.add_argument("--test-scores", dest="test_scores_path")
    p.add_argument("--label-column", dest="label_column")
    p.add_argument("--positive-token", dest="positive_token")
    p.add_argument("--negative-token", dest="negative_token")
    p.add_argument("--id-column", dest="id_column")


def _add_cost_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--c-fn", type=float, dest="c_fn")
    p.add_argument("--c-fp", type=float, dest="c_fp")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="triage-align",
        description="calibrated, cost-aware escalation decisions for alert triage",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a detector and fit its calibrator")
    _add_common(p)
    _add_data_opts(p)
    p.add_argument("--detector", choices=("logreg", "forest", "external_scores"))
    p.add_argument("--calibrator", choices=("platt", "isotonic", "auto"))
    p.add_argument("--model-name", dest="model_name")
    p.add_argument("--l2-lambda", type=float, dest="l2_lambda")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--tol", type=float, dest="tol")
    p.add_argument("--n-trees", type=int, dest="n_trees")
    p.add_argument("--max-depth", type=int, dest="max_depth")
    p.add_argument("--min-samples-leaf", type=int, dest="min_samples_leaf")
    p.add_argument("--features-per-split", type=int, dest="features_per_split")
    p.add_argument("--n-jobs", type=int, dest="n_jobs")
    p.add_argument("--calibration-fraction", type=float, dest="calibration_fraction")

    p = sub.add_parser("calibrate", help="fit a calibrator from a scores CSV")
    _add_common(p)
    p.add_argument("--train-scores", dest="train_scores_path")
    p.add_argument("--calibrator", choices=("platt", "isotonic", "auto"))
    p.add_argument("--reliability-bins", type=int, dest="reliability_bins")

    p = sub.add_parser("simulate", help="triage the test stream under all conditions")
    _add_common(p)
    _add_data_opts(p)
    _add_cost_opts(p)
    p.add_argument("--model", dest="model_path")

    p = sub.add_parser("sweep-threshold", help="cost vs escalation threshold")
    _add_common(p)
    _add_data_opts(p)
    _add_cost_opts(p)
    p.add_argument("--model", dest="model_path")
    p.add_argument("--sweep-min", type=float, dest="sweep_min")
    p.add_argument("--sweep-max", type=float, dest="sweep_max")
    p.add_argument("--sweep-step", type=float, dest="sweep_step")

    p = sub.add_parser("sweep-costs", help="re-simulate across cost ratios")
    _add_common(p)
    _add_data_opts(p)
    p.add_argument("--model", dest="model_path")
    p.add_argument(
        "--cost-ratios",
        dest="cost_ratios",
        type=lambda s: [float(v) for v in s.split(",")],
        help="comma-separated c_fn:c_fp ratios, e.g. 5,10,15,20",
    )

    p = sub.add_parser("reliability", help="reliability tables for raw/calibrated scores")
    _add_common(p)
    _add_data_opts(p)
    p.add_argument("--model", dest="model_path")
    p.add_argument("--reliability-bins", type=int, dest="reliability_bins")
    p.add_argument("--on", dest="reliability_on", choices=("calibration", "test"))

    p = sub.add_parser("serve", help="run the human-in-the-loop study service")
    _add_common(p)
    _add_data_opts(p)
    _add_cost_opts(p)
    p.add_argument("--model", dest="model_path")
    p.add_argument("--study-alerts", type=int, dest="study_alerts")
    p.add_argument("--host", dest="host")
    p.add_argument("--port", type=int, dest="port")
    p.add_argument("--ui-dir", dest="ui_dir")

    p = sub.add_parser("analyze-study", help="analyze a study trial log")
    _add_common(p)
    _add_cost_opts(p)
    p.add_argument("--log", dest="log_path", help="trial JSONL (default out/study/trials.jsonl)")

    p = sub.add_parser("make-synthetic", help="write the bundled synthetic fixture CSVs")
    _add_common(p)
    p.add_argument("--n-train", type=int, default=8000)
    p.add_argument("--n-test", type=int, default=5000)
    p.add_argument("--malicious-rate", type=float, default=0.2)

    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    import dataclasses

    known = {f.name for f in dataclasses.fields(RunConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in known and v is not None}
    return RunConfig.load(getattr(args, "config", None), overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "train":
            path = pipeline.cmd_train(cfg)
            print(path)
        elif args.command == "calibrate":
            print(pipeline.cmd_calibrate(cfg))
        elif args.command == "simulate":
            for path in pipeline.cmd_simulate(cfg):
                print(path)
        elif args.command == "sweep-threshold":
            print(pipeline.cmd_sweep_threshold(cfg))
        elif args.command == "sweep-costs":
            print(pipeline.cmd_sweep_costs(cfg))
        elif args.command == "reliability":
            for path in pipeline.cmd_reliability(cfg):
                print(path)
        elif args.command == "serve":
            _serve(cfg)
        elif args.command == "analyze-study":
            print(pipeline.cmd_analyze_study(cfg, getattr(args, "log_path", None)))
        elif args.command == "make-synthetic":
            for path in pipeline.cmd_make_synthetic(
                cfg, args.n_train, args.n_test, args.malicious_rate
            ):
                print(path)
        else:  # pragma: no cover - argparse enforces the choices
            raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, IngestionError, StudyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def _serve(cfg: RunConfig) -> None:
    import uvicorn

    from .service import create_app

    engine = pipeline.build_study_engine(cfg)
    app = create_app(engine, ui_dir=cfg.ui_dir)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="info")


if __name__ == "__main__":
    sys.exit(main())

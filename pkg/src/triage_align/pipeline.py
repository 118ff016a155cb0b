"""End-to-end orchestration behind the CLI: artifacts, CSV emission, wiring.

Every emitted file is written to a temporary name and renamed on success.
CSV outputs start with a comment line carrying the resolved config digest
and seed; a timestamp comment follows unless the run is deterministic.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import detectors
from .alerts import AlertStream, CostModel, ingest_csv, ingest_scores, stratified_split
from .calibration import (
    ReliabilityTable,
    calibrate,
    calibrator_from_dict,
    fit_isotonic,
    fit_platt,
    reliability,
)
from .config import ConfigError, RunConfig
from .detectors import ForestConfig, LogregConfig, predict, train_forest, train_logreg
from .evaluation import SweepGrid, simulate, sweep_cost_ratio, sweep_threshold
from .policy import BandEdges, CONDITIONS, decide, derive_threshold, score_alert
from .study import StudyBundle, StudyEngine, analyze_study, load_trial_log, sample_study_alerts

BUNDLE_VERSION = 1


def band_edges(cfg: RunConfig) -> BandEdges:
    return BandEdges(
        medium_low=cfg.band_medium_low,
        high_low=cfg.band_high_low,
        high_high=cfg.band_high_high,
        medium_high=cfg.band_medium_high,
    )


def cost_model(cfg: RunConfig) -> CostModel:
    return CostModel(c_fn=cfg.c_fn, c_fp=cfg.c_fp)


# -- atomic output helpers ----------------------------------------------------


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _csv_text(cfg: RunConfig, header: str, rows, trailing=()) -> str:
    lines = [f"# config_digest={cfg.digest()[:12]} seed={cfg.seed}"]
    if not cfg.deterministic:
        lines.append(f"# generated_at={datetime.now(timezone.utc).isoformat()}")
    lines.append(header)
    lines.extend(rows)
    lines.extend(trailing)
    return "\n".join(lines) + "\n"


def write_csv(cfg: RunConfig, path, header: str, rows, trailing=()) -> Path:
    path = Path(path)
    _atomic_write_text(path, _csv_text(cfg, header, rows, trailing))
    return path


def write_json(cfg: RunConfig, path, doc: dict) -> Path:
    path = Path(path)
    doc = {"config_digest": cfg.digest()[:12], "seed": cfg.seed, **doc}
    _atomic_write_text(path, json.dumps(doc, indent=2) + "\n")
    return path


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_config_echo(cfg: RunConfig) -> Path:
    out = _out_dir(cfg) / "run_config.json"
    doc = {"config_digest": cfg.digest(), **cfg.to_dict()}
    _atomic_write_text(out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return out


# -- training -----------------------------------------------------------------


@dataclass
class Bundle:
    """A trained detector (optional) plus its calibrator, ready to score."""

    model_name: str
    detector: str
    model: object | None
    calibrator: object
    feature_names: list[str]
    train_digest: str
    split_fraction: float
    split_seed: int


def _fit_calibrator(kind: str, pairs):
    if kind == "platt":
        return fit_platt(pairs)
    if kind == "isotonic":
        return fit_isotonic(pairs)
    raise ConfigError(f"unknown calibrator kind {kind!r}")


def cmd_train(cfg: RunConfig) -> Path:
    """Train the detector, fit the calibrator on a held-out slice, persist."""
    out = _out_dir(cfg)
    write_config_echo(cfg)
    cal_kind = cfg.resolved_calibrator()

    if cfg.detector == "external_scores":
        if not cfg.train_scores_path:
            raise ConfigError("external_scores detector requires train_scores_path")
        rows = ingest_scores(cfg.train_scores_path)
        pairs = [(score, label) for _, score, label in rows]
        calibrator = _fit_calibrator(cal_kind, pairs)
        bundle_doc = {
            "format_version": BUNDLE_VERSION,
            "model_name": cfg.resolved_model_name(),
            "detector": cfg.detector,
            "model": None,
            "calibrator": calibrator.to_dict(),
            "feature_names": [],
            "train_digest": "",
            "split": {"fraction": 1.0, "seed": cfg.split_seed},
        }
        path = write_json(cfg, out / "model.json", bundle_doc)
        write_json(
            cfg,
            out / "calibration_split.json",
            {
                "train_digest": "",
                "fit_ids": [],
                "calibration_ids": [rid for rid, _, _ in rows],
            },
        )
        return path

    if not cfg.train_path:
        raise ConfigError("training requires train_path")
    stream, report = ingest_csv(
        cfg.train_path,
        cfg.label_column,
        keep_columns=cfg.keep_columns,
        id_column=cfg.id_column,
        positive_token=cfg.positive_token,
        negative_token=cfg.negative_token,
    )
    report.print_summary()
    _atomic_write_text(out / "ingestion_report.json", report.to_json() + "\n")

    fit_fraction = 1.0 - cfg.calibration_fraction
    fit_stream, cal_stream = stratified_split(stream, fit_fraction, cfg.split_seed)

    if cfg.detector == "logreg":
        model = train_logreg(
            fit_stream,
            LogregConfig(
                l2_lambda=cfg.l2_lambda,
                max_iters=cfg.max_iters,
                tol=cfg.tol,
                seed=cfg.seed,
            ),
        )
    else:
        model = train_forest(
            fit_stream,
            ForestConfig(
                n_trees=cfg.n_trees,
                max_depth=cfg.max_depth,
                min_samples_leaf=cfg.min_samples_leaf,
                features_per_split=cfg.features_per_split,
                seed=cfg.seed,
                n_jobs=cfg.n_jobs,
            ),
        )

    cal_raw = predict(model, cal_stream)
    pairs = [(score, int(label)) for (_, score), label in zip(cal_raw, cal_stream.y)]
    calibrator = _fit_calibrator(cal_kind, pairs)

    bundle_doc = {
        "format_version": BUNDLE_VERSION,
        "model_name": cfg.resolved_model_name(),
        "detector": cfg.detector,
        "model": detectors.model_to_dict(model),
        "calibrator": calibrator.to_dict(),
        "feature_names": stream.feature_names,
        "train_digest": stream.source_digest,
        "split": {"fraction": fit_fraction, "seed": cfg.split_seed},
    }
    path = write_json(cfg, out / "model.json", bundle_doc)
    write_json(
        cfg,
        out / "calibration_split.json",
        {
            "train_digest": stream.source_digest,
            "split_seed": cfg.split_seed,
            "fit_fraction": fit_fraction,
            "fit_ids": fit_stream.ids,
            "calibration_ids": cal_stream.ids,
        },
    )
    return path


def load_bundle(path) -> Bundle:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != BUNDLE_VERSION:
        raise ValueError(f"unsupported model bundle version {doc.get('format_version')!r}")
    model = None
    if doc.get("model") is not None:
        model = detectors.model_from_dict(doc["model"])
    return Bundle(
        model_name=doc["model_name"],
        detector=doc["detector"],
        model=model,
        calibrator=calibrator_from_dict(doc["calibrator"]),
        feature_names=list(doc["feature_names"]),
        train_digest=doc.get("train_digest", ""),
        split_fraction=float(doc["split"]["fraction"]),
        split_seed=int(doc["split"]["seed"]),
    )


def _bundle_path(cfg: RunConfig) -> Path:
    if cfg.model_path:
        return Path(cfg.model_path)
    return Path(cfg.out_dir) / "model.json"


def cmd_calibrate(cfg: RunConfig) -> Path:
    """Fit a standalone calibrator from a scores CSV (id,raw_score,label)."""
    if not cfg.train_scores_path:
        raise ConfigError("calibrate requires train_scores_path (id,raw_score,label)")
    out = _out_dir(cfg)
    write_config_echo(cfg)
    rows = ingest_scores(cfg.train_scores_path)
    pairs = [(score, label) for _, score, label in rows]
    kind = cfg.resolved_calibrator() if cfg.calibrator != "auto" else "isotonic"
    calibrator = _fit_calibrator(kind, pairs)
    raw = [score for _, score, _ in rows]
    labels = [label for _, _, label in rows]
    before = reliability(list(zip(raw, labels)), cfg.reliability_bins)
    after = reliability(
        list(zip(calibrate(calibrator, raw), labels)), cfg.reliability_bins
    )
    return write_json(
        cfg,
        out / "calibrator.json",
        {
            "calibrator": calibrator.to_dict(),
            "ece_raw": before.ece,
            "ece_calibrated": after.ece,
            "n": before.n,
        },
    )


# -- scoring and simulation -----------------------------------------------------


def scored_test_stream(cfg: RunConfig, bundle: Bundle):
    """Test alerts plus aligned raw/calibrated scores: (stream, raw, cal)."""
    if bundle.detector == "external_scores":
        if not cfg.test_scores_path:
            raise ConfigError("external_scores simulation requires test_scores_path")
        rows = ingest_scores(cfg.test_scores_path)
        ids = [rid for rid, _, _ in rows]
        labels = [label for _, _, label in rows]
        stream = AlertStream(ids, np.zeros((len(rows), 0)), labels, [])
        raw_pairs = [(rid, score) for rid, score, _ in rows]
    else:
        if not cfg.test_path:
            raise ConfigError("simulation requires test_path")
        stream, report = ingest_csv(
            cfg.test_path,
            cfg.label_column,
            keep_columns=bundle.feature_names,
            id_column=cfg.id_column,
            positive_token=cfg.positive_token,
            negative_token=cfg.negative_token,
        )
        report.print_summary()
        if stream.feature_names != bundle.feature_names:
            raise ValueError(
                "test feature columns do not match the trained model "
                f"({stream.feature_names} vs {bundle.feature_names})"
            )
        raw_pairs = predict(bundle.model, stream)
    cal_values = calibrate(bundle.calibrator, [s for _, s in raw_pairs])
    cal_pairs = list(zip(stream.ids, cal_values))
    return stream, raw_pairs, cal_pairs


def cmd_simulate(cfg: RunConfig) -> tuple[Path, Path]:
    """Emit the results table and the per-alert audit trail."""
    out = _out_dir(cfg)
    write_config_echo(cfg)
    bundle = load_bundle(_bundle_path(cfg))
    stream, raw_pairs, cal_pairs = scored_test_stream(cfg, bundle)
    cost = cost_model(cfg)
    edges = band_edges(cfg)

    outcomes = simulate(
        stream,
        raw_pairs,
        cal_pairs,
        cost,
        model_name=bundle.model_name,
        edges=edges,
        baseline_cutoff=cfg.baseline_cutoff,
        misaligned_cutoff=cfg.misaligned_cutoff,
    )
    results_rows = [
        f"{o.model_name},{o.condition.value},{o.fn_count},{o.fp_count},"
        f"{o.tn_count},{o.tp_count},{o.cost!r}"
        for o in outcomes
    ]
    results_path = write_csv(
        cfg, out / "results.csv", "model,condition,fn,fp,tn,tp,cost", results_rows
    )

    t = derive_threshold(cost)
    raw_by_id = dict(raw_pairs)
    cal_by_id = dict(cal_pairs)
    audit_rows = []
    for alert_id, label in zip(stream.ids, stream.y):
        sa = score_alert(alert_id, raw_by_id[alert_id], cal_by_id[alert_id], edges)
        d = [
            decide(c, sa, t, cfg.baseline_cutoff, cfg.misaligned_cutoff).value
            for c in CONDITIONS
        ]
        audit_rows.append(
            f"{alert_id},{int(label)},{sa.p!r},{sa.p_cal!r},{sa.band.value},"
            f"{d[0]},{d[1]},{d[2]}"
        )
    audit_path = write_csv(
        cfg,
        out / "audit.csv",
        "id,label,p_raw,p_cal,band,decision_c0,decision_c1,decision_c2",
        audit_rows,
    )
    return results_path, audit_path


def cmd_sweep_threshold(cfg: RunConfig) -> Path:
    out = _out_dir(cfg)
    write_config_echo(cfg)
    bundle = load_bundle(_bundle_path(cfg))
    stream, _, cal_pairs = scored_test_stream(cfg, bundle)
    cost = cost_model(cfg)
    sweep = sweep_threshold(
        [s for _, s in cal_pairs],
        stream.y,
        cost,
        SweepGrid(min=cfg.sweep_min, max=cfg.sweep_max, step=cfg.sweep_step),
    )
    rows = [f"{p.threshold!r},{p.cost!r}" for p in sweep.points]
    trailing = [
        f"# t_star={sweep.t_star!r} argmin_threshold={sweep.argmin_threshold!r} "
        f"argmin_cost={sweep.argmin_cost!r}"
    ]
    _write_plot_hints(cfg)
    return write_csv(cfg, out / "sweep_threshold.csv", "threshold,cost", rows, trailing)


def cmd_sweep_costs(cfg: RunConfig) -> Path:
    out = _out_dir(cfg)
    write_config_echo(cfg)
    bundle = load_bundle(_bundle_path(cfg))
    stream, raw_pairs, cal_pairs = scored_test_stream(cfg, bundle)
    points = sweep_cost_ratio(
        [s for _, s in raw_pairs],
        [s for _, s in cal_pairs],
        stream.y,
        ratios=cfg.cost_ratios,
        edges=band_edges(cfg),
        baseline_cutoff=cfg.baseline_cutoff,
        misaligned_cutoff=cfg.misaligned_cutoff,
    )
    rows = [
        f"{p.ratio!r},{p.condition.value},{p.cost!r},{p.t_star!r}" for p in points
    ]
    return write_csv(cfg, out / "sweep_costs.csv", "ratio,condition,cost,t_star", rows)


def _calibration_pairs(cfg: RunConfig, bundle: Bundle):
    """(raw score, label) pairs for the data the calibrator was fitted on."""
    if bundle.detector == "external_scores":
        rows = ingest_scores(cfg.train_scores_path)
        return [(score, label) for _, score, label in rows]
    if not cfg.train_path:
        raise ConfigError("reliability on the calibration split requires train_path")
    stream, _ = ingest_csv(
        cfg.train_path,
        cfg.label_column,
        keep_columns=bundle.feature_names,
        id_column=cfg.id_column,
        positive_token=cfg.positive_token,
        negative_token=cfg.negative_token,
    )
    if bundle.train_digest and stream.source_digest != bundle.train_digest:
        raise ValueError(
            "train file does not match the one the model was fitted on "
            "(digest mismatch); refusing to reconstruct the calibration split"
        )
    _, cal_stream = stratified_split(stream, bundle.split_fraction, bundle.split_seed)
    raw = predict(bundle.model, cal_stream)
    return [(score, int(label)) for (_, score), label in zip(raw, cal_stream.y)]


def _reliability_rows(table: ReliabilityTable):
    rows = []
    for b in table.bins:
        conf = "" if np.isnan(b.mean_confidence) else repr(b.mean_confidence)
        freq = "" if np.isnan(b.empirical_frequency) else repr(b.empirical_frequency)
        rows.append(f"{b.bin_low!r},{b.bin_high!r},{conf},{freq},{b.count}")
    return rows


def cmd_reliability(cfg: RunConfig) -> tuple[Path, Path]:
    """Reliability tables for raw and calibrated scores, one CSV each."""
    out = _out_dir(cfg)
    write_config_echo(cfg)
    bundle = load_bundle(_bundle_path(cfg))
    if cfg.reliability_on == "test":
        stream, raw_pairs, cal_pairs = scored_test_stream(cfg, bundle)
        labels = [int(v) for v in stream.y]
        raw_pairs_sl = [(s, l) for (_, s), l in zip(raw_pairs, labels)]
        cal_pairs_sl = [(s, l) for (_, s), l in zip(cal_pairs, labels)]
    else:
        raw_pairs_sl = _calibration_pairs(cfg, bundle)
        cal_values = calibrate(bundle.calibrator, [s for s, _ in raw_pairs_sl])
        cal_pairs_sl = [(c, l) for c, (_, l) in zip(cal_values, raw_pairs_sl)]

    header = "bin_low,bin_high,mean_confidence,empirical_frequency,count"
    paths = []
    for name, pairs in (("raw", raw_pairs_sl), ("calibrated", cal_pairs_sl)):
        table = reliability(pairs, cfg.reliability_bins)
        trailing = [f"# ece={table.ece!r} n={table.n}"]
        paths.append(
            write_csv(
                cfg,
                out / f"reliability_{name}.csv",
                header,
                _reliability_rows(table),
                trailing,
            )
        )
    _write_plot_hints(cfg)
    return paths[0], paths[1]


PLOT_HINTS = """\
# gnuplot layout hints for the emitted CSVs
set datafile separator ","
set datafile commentschars "#"
# reliability diagram (run for reliability_raw.csv and reliability_calibrated.csv):
#   set xlabel "mean confidence"; set ylabel "empirical frequency"
#   plot x dash, "reliability_raw.csv" using 3:4 with linespoints, \\
#        "reliability_calibrated.csv" using 3:4 with linespoints
# cost vs threshold:
#   set xlabel "threshold"; set ylabel "cost-weighted loss"
#   plot "sweep_threshold.csv" using 1:2 with lines
#   (draw a vertical line at the t_star recorded in the trailing comment)
# false negatives per condition: see results.csv columns condition,fn
"""


def _write_plot_hints(cfg: RunConfig) -> Path:
    path = _out_dir(cfg) / "plots.gp"
    if not path.exists():
        _atomic_write_text(path, PLOT_HINTS)
    return path


# -- study service ---------------------------------------------------------------


def build_study_engine(cfg: RunConfig) -> StudyEngine:
    bundle = load_bundle(_bundle_path(cfg))
    stream, raw_pairs, cal_pairs = scored_test_stream(cfg, bundle)
    alerts = sample_study_alerts(
        stream,
        dict(raw_pairs),
        dict(cal_pairs),
        n=cfg.study_alerts,
        seed=cfg.study_seed,
    )
    study_bundle = StudyBundle(
        model_name=bundle.model_name,
        feature_names=stream.feature_names,
        alerts=alerts,
        cost=cost_model(cfg),
        edges=band_edges(cfg),
        baseline_cutoff=cfg.baseline_cutoff,
        misaligned_cutoff=cfg.misaligned_cutoff,
        seed=cfg.study_seed,
    )
    return StudyEngine(study_bundle, log_dir=Path(cfg.out_dir) / "study")


def cmd_analyze_study(cfg: RunConfig, log_path=None) -> Path:
    out = _out_dir(cfg)
    write_config_echo(cfg)
    log_path = Path(log_path) if log_path else out / "study" / "trials.jsonl"
    if not log_path.exists():
        raise ConfigError(f"trial log not found: {log_path}")
    records = load_trial_log(log_path)
    analysis = analyze_study(records, cost_model(cfg))
    return write_json(cfg, out / "analysis.json", analysis.to_dict())


def cmd_make_synthetic(cfg: RunConfig, n_train=8000, n_test=5000, rate=0.2):
    """Write the seeded synthetic train/test fixture CSVs."""
    from .synthetic import write_synthetic_csv

    out = _out_dir(cfg)
    write_config_echo(cfg)
    train = out / "synthetic_train.csv"
    test = out / "synthetic_test.csv"
    write_synthetic_csv(train, n_train, seed=cfg.seed, malicious_rate=rate, prefix="trn")
    write_synthetic_csv(test, n_test, seed=cfg.seed + 1, malicious_rate=rate, prefix="tst")
    return train, test

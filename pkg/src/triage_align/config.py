"""Run configuration: one JSON document, mirrored by CLI flags (flags win)."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field


class ConfigError(ValueError):
    pass


DETECTORS = ("logreg", "forest", "external_scores")
CALIBRATORS = ("platt", "isotonic", "auto")


@dataclass
class RunConfig:
    # data
    train_path: str | None = None
    test_path: str | None = None
    train_scores_path: str | None = None  # external_scores detector
    test_scores_path: str | None = None
    label_column: str = "label"
    positive_token: str = "1"
    negative_token: str = "0"
    id_column: str | None = "id"
    keep_columns: list[str] | None = None
    # detector
    detector: str = "logreg"
    model_name: str | None = None  # defaults to the detector name
    l2_lambda: float = 1e-4
    max_iters: int = 5000
    tol: float = 1e-8
    n_trees: int = 100
    max_depth: int = 12
    min_samples_leaf: int = 10
    features_per_split: int | None = None
    n_jobs: int = 1
    # calibration
    calibrator: str = "auto"
    calibration_fraction: float = 0.2
    reliability_bins: int = 10
    reliability_on: str = "calibration"  # calibration split or "test"
    # policy
    c_fn: float = 10.0
    c_fp: float = 1.0
    band_medium_low: float = 0.35
    band_high_low: float = 0.45
    band_high_high: float = 0.55
    band_medium_high: float = 0.65
    baseline_cutoff: float = 0.5
    misaligned_cutoff: float = 0.7
    # sweeps
    sweep_min: float = 0.01
    sweep_max: float = 0.99
    sweep_step: float = 0.01
    cost_ratios: list[float] = field(default_factory=lambda: [5.0, 10.0, 15.0, 20.0])
    # study service
    study_alerts: int = 60
    host: str = "127.0.0.1"
    port: int = 8000
    ui_dir: str | None = None
    # artifacts / misc
    model_path: str | None = None
    seed: int = 0
    split_seed: int | None = None  # None -> seed + 1000
    study_seed: int | None = None  # None -> seed + 2000
    out_dir: str = "out"
    deterministic: bool = False

    def __post_init__(self):
        if self.detector not in DETECTORS:
            raise ConfigError(f"detector must be one of {DETECTORS}, got {self.detector!r}")
        if self.calibrator not in CALIBRATORS:
            raise ConfigError(
                f"calibrator must be one of {CALIBRATORS}, got {self.calibrator!r}"
            )
        if not 0.0 < self.calibration_fraction < 1.0:
            raise ConfigError("calibration_fraction must be in (0, 1)")
        if self.reliability_on not in ("calibration", "test"):
            raise ConfigError("reliability_on must be 'calibration' or 'test'")
        if self.split_seed is None:
            self.split_seed = self.seed + 1000
        if self.study_seed is None:
            self.study_seed = self.seed + 2000

    def resolved_calibrator(self) -> str:
        if self.calibrator != "auto":
            return self.calibrator
        # auto pairing: sigmoid for the linear model, isotonic for the forest
        # and for externally supplied scores
        return "platt" if self.detector == "logreg" else "isotonic"

    def resolved_model_name(self) -> str:
        if self.model_name:
            return self.model_name
        return {"logreg": "LR", "forest": "RF", "external_scores": "external"}[self.detector]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def load(cls, path: str | None = None, overrides: dict | None = None) -> "RunConfig":
        """Build from an optional JSON file plus flag overrides (flags win)."""
        doc: dict = {}
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
            if not isinstance(doc, dict):
                raise ConfigError("config file must contain a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if overrides:
            doc.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc))

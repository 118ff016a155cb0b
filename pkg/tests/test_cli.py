import json

import pytest

from triage_align.cli import main
from triage_align.pipeline import build_study_engine
from triage_align.config import RunConfig
from triage_align.synthetic import write_synthetic_csv


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli_data")
    write_synthetic_csv(d / "train.csv", 1000, seed=3, prefix="trn")
    write_synthetic_csv(d / "test.csv", 400, seed=13, prefix="tst")
    return d


def run(*argv):
    return main(list(argv))


class TestCommands:
    def test_full_chain(self, data_dir, tmp_path):
        out = tmp_path / "run"
        common = ["--out-dir", str(out), "--deterministic"]
        assert run(
            "train", "--train", str(data_dir / "train.csv"),
            "--detector", "logreg", *common,
        ) == 0
        assert run(
            "simulate", "--test", str(data_dir / "test.csv"), *common,
        ) == 0
        assert run(
            "sweep-threshold", "--test", str(data_dir / "test.csv"), *common,
        ) == 0
        assert run(
            "sweep-costs", "--test", str(data_dir / "test.csv"),
            "--cost-ratios", "5,10", *common,
        ) == 0
        assert run(
            "reliability", "--train", str(data_dir / "train.csv"), *common,
        ) == 0
        for name in (
            "model.json", "results.csv", "audit.csv", "sweep_threshold.csv",
            "sweep_costs.csv", "reliability_raw.csv", "reliability_calibrated.csv",
        ):
            assert (out / name).exists(), name

    def test_make_synthetic(self, tmp_path):
        assert run(
            "make-synthetic", "--n-train", "60", "--n-test", "30",
            "--out-dir", str(tmp_path), "--deterministic",
        ) == 0
        assert (tmp_path / "synthetic_train.csv").exists()

    def test_analyze_study(self, data_dir, tmp_path):
        out = tmp_path / "study_run"
        cfg = RunConfig(
            train_path=str(data_dir / "train.csv"),
            test_path=str(data_dir / "test.csv"),
            out_dir=str(out),
            study_alerts=5,
            deterministic=True,
        )
        assert run(
            "train", "--train", cfg.train_path, "--out-dir", str(out), "--deterministic",
        ) == 0
        engine = build_study_engine(cfg)
        engine.create_session("p0", "proxy_analyst")
        while not engine.progress("p0")["completed"]:
            trial = engine.next_trial("p0")
            engine.submit_decision("p0", trial["alert_id"], "Close", 77)
        assert run("analyze-study", "--out-dir", str(out), "--deterministic") == 0
        doc = json.loads((out / "analysis.json").read_text())
        assert doc["n_completed"] == 1

    def test_calibrate_command(self, tmp_path):
        lines = ["id,raw_score,label"] + [
            f"s{i},{(i % 10) / 10.0},{1 if i % 10 >= 5 else 0}" for i in range(40)
        ]
        (tmp_path / "scores.csv").write_text("\n".join(lines) + "\n")
        assert run(
            "calibrate", "--train-scores", str(tmp_path / "scores.csv"),
            "--calibrator", "isotonic", "--out-dir", str(tmp_path / "out"),
            "--deterministic",
        ) == 0
        assert (tmp_path / "out" / "calibrator.json").exists()


class TestConfigPrecedence:
    def test_flags_override_config_file(self, data_dir, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({
            "train_path": str(data_dir / "train.csv"),
            "detector": "logreg",
            "out_dir": str(tmp_path / "from_config"),
            "deterministic": True,
        }))
        out = tmp_path / "from_flag"
        assert run("train", "--config", str(cfg_file), "--out-dir", str(out)) == 0
        assert (out / "model.json").exists()
        assert not (tmp_path / "from_config").exists()

    def test_config_echo_carries_seeds(self, data_dir, tmp_path):
        out = tmp_path / "echo"
        assert run(
            "train", "--train", str(data_dir / "train.csv"),
            "--seed", "5", "--out-dir", str(out), "--deterministic",
        ) == 0
        echo = json.loads((out / "run_config.json").read_text())
        assert echo["seed"] == 5
        assert echo["split_seed"] == 1005
        assert echo["study_seed"] == 2005
        assert "config_digest" in echo

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"no_such_key": 1}))
        assert run("train", "--config", str(cfg_file)) == 2


class TestErrorStatus:
    def test_missing_file_nonzero(self, tmp_path):
        assert run(
            "train", "--train", str(tmp_path / "missing.csv"),
            "--out-dir", str(tmp_path / "out"),
        ) == 2

    def test_simulate_without_model_nonzero(self, data_dir, tmp_path):
        assert run(
            "simulate", "--test", str(data_dir / "test.csv"),
            "--out-dir", str(tmp_path / "none"),
        ) == 2

    def test_no_partial_outputs_on_failure(self, data_dir, tmp_path):
        out = tmp_path / "partial"
        run("simulate", "--test", str(data_dir / "test.csv"), "--out-dir", str(out))
        assert not (out / "results.csv").exists()
        assert not list(out.glob("*.tmp"))


class TestDeterminism:
    def test_byte_identical_outputs(self, data_dir, tmp_path):
        # identical config + seeds, re-run in place: outputs must not move a byte
        out = tmp_path / "run"
        blobs = []
        for _ in range(2):
            run(
                "train", "--train", str(data_dir / "train.csv"),
                "--out-dir", str(out), "--deterministic",
            )
            run("simulate", "--test", str(data_dir / "test.csv"),
                "--out-dir", str(out), "--deterministic")
            blobs.append(
                (out / "results.csv").read_bytes()
                + (out / "audit.csv").read_bytes()
                + (out / "model.json").read_bytes()
            )
        assert blobs[0] == blobs[1]

    def test_timestamp_suppressed_only_when_deterministic(self, data_dir, tmp_path):
        out1, out2 = tmp_path / "d", tmp_path / "nd"
        run("train", "--train", str(data_dir / "train.csv"),
            "--out-dir", str(out1), "--deterministic")
        run("simulate", "--test", str(data_dir / "test.csv"),
            "--out-dir", str(out1), "--deterministic")
        run("train", "--train", str(data_dir / "train.csv"), "--out-dir", str(out2))
        run("simulate", "--test", str(data_dir / "test.csv"), "--out-dir", str(out2))
        det = (out1 / "results.csv").read_text()
        nondet = (out2 / "results.csv").read_text()
        assert "generated_at" not in det
        assert "generated_at" in nondet

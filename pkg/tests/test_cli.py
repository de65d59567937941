import numpy as np
import pytest

from ot_reweight.cli import run_cli
from ot_reweight.data import load_dataset

FAST = [
    "--set", "data.classes=4", "--set", "data.n_head=24",
    "--set", "data.if=8", "--set", "data.dim=6",
    "--set", "data.test_per_class=10", "--set", "data.meta_per_class=2",
    "--set", "train.batch_size=16", "--set", "train.epochs1=2",
    "--set", "train.epochs2=2", "--set", "train.alpha=0.5",
    "--set", "train.beta=0.5", "--set", "train.weight_decay=0",
]


class TestGen:
    def test_writes_splits(self, tmp_path, capsys):
        rc = run_cli(["gen", "-o", str(tmp_path), "--classes", "4",
                      "--n-head", "20", "--if", "5", "--dim", "6",
                      "--test-per-class", "8", "--meta-per-class", "2"])
        assert rc == 0
        for name in ("train.csv", "meta.csv", "test.csv", "spec.json"):
            assert (tmp_path / name).exists()
        meta = load_dataset(tmp_path / "meta.csv", num_classes=4)
        assert np.all(meta.class_counts == 2)
        assert "train" in capsys.readouterr().out


class TestCheckSinkhorn:
    def test_reports_and_plan_csv(self, tmp_path, capsys):
        rc = run_cli(["check-sinkhorn", "-o", str(tmp_path), "--seed", "1",
                      "--rows", "5", "--cols", "3"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "marginal violation" in out
        assert "gradient check" in out
        lines = (tmp_path / "plan.csv").read_text().strip().splitlines()
        assert lines[0] == "row,col,mass"
        assert len(lines) == 1 + 5 * 3
        mass = sum(float(l.split(",")[2]) for l in lines[1:])
        assert mass == pytest.approx(1.0, abs=1e-6)


class TestTrain:
    def test_run_and_artifacts(self, tmp_path):
        rc = run_cli(["train", "-o", str(tmp_path), "--method", "ot_direct",
                      "--cost", "combined", "--no-figures", *FAST])
        assert rc == 0
        assert (tmp_path / "metrics.csv").exists()
        assert (tmp_path / "config.resolved").exists()
        assert (tmp_path / "model_seed0.npz").exists()

    def test_metrics_bitwise_deterministic(self, tmp_path):
        for sub in ("a", "b"):
            rc = run_cli(["train", "-o", str(tmp_path / sub), "--seed", "3",
                          "--method", "ot_direct", "--no-figures", *FAST])
            assert rc == 0
        assert ((tmp_path / "a" / "metrics.csv").read_bytes()
                == (tmp_path / "b" / "metrics.csv").read_bytes())

    def test_seeds_flag(self, tmp_path):
        rc = run_cli(["train", "-o", str(tmp_path), "--method", "ce",
                      "--seeds", "0,1", "--no-figures", *FAST])
        assert rc == 0
        lines = (tmp_path / "metrics.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 2 * 2

    def test_config_file_plus_override(self, tmp_path):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("method=ce\ntrain.momentum=0.8\ntrain.epochs2=1\n")
        rc = run_cli(["train", "-o", str(tmp_path / "out"),
                      "--config", str(cfgfile), "--method", "proportion",
                      "--no-figures", *FAST])
        assert rc == 0
        resolved = (tmp_path / "out" / "config.resolved").read_text()
        # flags beat the file; untouched file keys carry through
        assert "method=proportion" in resolved
        assert "train.momentum=0.8" in resolved
        assert "train.epochs2=2" in resolved

    def test_config_error_exit_code(self, tmp_path, capsys):
        rc = run_cli(["train", "-o", str(tmp_path), "--method", "ce",
                      "--q", "prototype", "--no-figures", *FAST])
        assert rc == 2
        assert "config error" in capsys.readouterr().err

    def test_bad_set_value_exit_code(self, tmp_path):
        rc = run_cli(["train", "-o", str(tmp_path), "--no-figures",
                      "--set", "sinkhorn.lambda=big"])
        assert rc == 2


class TestEval:
    def test_checkpoint_eval(self, tmp_path):
        run_dir = tmp_path / "run"
        rc = run_cli(["train", "-o", str(run_dir), "--method", "ce",
                      "--no-figures", *FAST])
        assert rc == 0
        rc = run_cli(["gen", "-o", str(tmp_path / "data"), "--classes", "4",
                      "--n-head", "24", "--if", "8", "--dim", "6",
                      "--test-per-class", "10"])
        assert rc == 0
        rc = run_cli(["eval", "-o", str(tmp_path / "ev"),
                      "--model", str(run_dir / "model_seed0.npz"),
                      "--test", str(tmp_path / "data" / "test.csv")])
        assert rc == 0
        lines = (tmp_path / "ev" / "eval_metrics.csv").read_text().splitlines()
        assert lines[0] == "top1_error,balanced_accuracy,min_class_recall"
        vals = [float(v) for v in lines[1].split(",")]
        assert all(0.0 <= v <= 1.0 for v in vals)

    def test_missing_model_exit_code(self, tmp_path):
        rc = run_cli(["eval", "-o", str(tmp_path),
                      "--model", str(tmp_path / "nope.npz"),
                      "--test", str(tmp_path / "nope.csv")])
        assert rc == 1


class TestAblate:
    def test_small_grid(self, tmp_path):
        rc = run_cli(["ablate", "-o", str(tmp_path), "--no-figures", *FAST,
                      "--set", "train.epochs1=1", "--set", "train.epochs2=1"])
        assert rc == 0
        report = (tmp_path / "report.md").read_text()
        for kind in ("label", "feature", "combined"):
            assert kind in report
        assert "scratch" in report

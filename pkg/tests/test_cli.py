import json

import numpy as np
import pytest

from missfit.cli import main
from missfit.core import MaskedDataset, write_csv


@pytest.fixture
def dataset_csv(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(80, 3))
    M = (rng.random((80, 3)) < 0.3).astype(int)
    y = np.sum((1 - M) * X, axis=1) + 0.1 * rng.normal(size=80)
    path = tmp_path / "data.csv"
    write_csv(MaskedDataset(X, M, y), path)
    return path


def config_doc(**over):
    doc = {"name": "cli", "methods": ["static"],
           "generator": {"n": 100, "d": 3, "k": 2, "r": 2, "p": 0.3},
           "replications": 2, "cv_folds": 3,
           "grids": {"static": [{"lam": 0.01}]}}
    doc.update(over)
    return doc


class TestGenerate:
    def test_writes_csv_and_sidecar(self, tmp_path, capsys):
        out = tmp_path / "gen.csv"
        code = main(["generate", "--n", "50", "--d", "4", "--k", "2",
                     "--r", "2", "--out", str(out)])
        assert code == 0
        assert out.exists()
        doc = json.loads((tmp_path / "gen.csv.json").read_text())
        assert doc["n"] == 50 and doc["d"] == 4
        text = capsys.readouterr().out
        assert "missing fraction" in text

    def test_bad_p_is_usage_error(self, tmp_path, capsys):
        code = main(["generate", "--p", "1.5", "--out", str(tmp_path / "x.csv")])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_seed_env_override(self, tmp_path, monkeypatch):
        a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
        args = ["generate", "--n", "30", "--d", "3", "--k", "2", "--r", "2"]
        main(args + ["--seed", "1", "--out", str(a)])
        monkeypatch.setenv("MISSFIT_SEED", "1")
        main(args + ["--seed", "99", "--out", str(b)])
        monkeypatch.delenv("MISSFIT_SEED")
        main(args + ["--seed", "99", "--out", str(c)])
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes() != c.read_bytes()


class TestFitPredict:
    @pytest.mark.parametrize("method", ["static", "affine_intercept", "finite",
                                        "joint_linear", "cart_mia"])
    def test_fit_then_predict(self, dataset_csv, tmp_path, method, capsys):
        model = tmp_path / "model.json"
        code = main(["fit", "--data", str(dataset_csv), "--method", method,
                     "--lam", "0.001", "--out", str(model)])
        assert code == 0
        assert "training MSE" in capsys.readouterr().out
        preds = tmp_path / "preds.csv"
        code = main(["predict", "--model", str(model), "--data",
                     str(dataset_csv), "--out", str(preds)])
        assert code == 0
        lines = preds.read_text().splitlines()
        assert lines[0] == "prediction"
        assert len(lines) == 81

    def test_unknown_method(self, dataset_csv, tmp_path, capsys):
        code = main(["fit", "--data", str(dataset_csv), "--method", "magic",
                     "--out", str(tmp_path / "m.json")])
        assert code == 2
        assert "unknown method" in capsys.readouterr().err

    def test_missing_data_file(self, tmp_path, capsys):
        code = main(["fit", "--data", str(tmp_path / "nope.csv"),
                     "--method", "static", "--out", str(tmp_path / "m.json")])
        assert code == 1

    def test_predict_rejects_garbage_model(self, dataset_csv, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"type\": \"sundial\"}")
        code = main(["predict", "--model", str(bad), "--data",
                     str(dataset_csv), "--out", str(tmp_path / "p.csv")])
        assert code == 2


class TestBench:
    def test_dry_run_lists_plan(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(config_doc()))
        code = main(["bench", "--config", str(cfg), "--out",
                     str(tmp_path / "out.csv"), "--dry-run"])
        assert code == 0
        text = capsys.readouterr().out
        assert "method static" in text
        assert not (tmp_path / "out.csv").exists()

    def test_full_run_writes_results(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(config_doc()))
        out = tmp_path / "out.csv"
        code = main(["bench", "--config", str(cfg), "--out", str(out),
                     "--jobs", "1"])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "dataset,method,setting,replication,metric,value"
        assert len(lines) == 3  # 1 method x 2 replications
        assert (tmp_path / "out.csv.timings.csv").exists()

    def test_invalid_config_is_usage_error(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(config_doc(methods=["bogus"])))
        code = main(["bench", "--config", str(cfg),
                     "--out", str(tmp_path / "o.csv")])
        assert code == 2
        assert "$.methods[0]" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["bench", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o.csv")])
        assert code == 1

    def test_resume_reproduces_bytes(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(config_doc(methods=["static", "cart_mia"],
                                             grids={"static": [{"lam": 0.01}],
                                                    "cart_mia": [{"max_depth": 3}]})))
        full = tmp_path / "full.csv"
        main(["bench", "--config", str(cfg), "--out", str(full), "--jobs", "1"])
        reference = full.read_bytes()
        # drop the cart_mia rows and resume
        partial = tmp_path / "partial.csv"
        lines = full.read_text().splitlines()
        kept = [lines[0]] + [l for l in lines[1:] if ",cart_mia," not in l]
        partial.write_text("\n".join(kept) + "\n")
        code = main(["bench", "--config", str(cfg), "--out", str(partial),
                     "--resume", "--jobs", "1"])
        assert code == 0
        assert "resuming" in capsys.readouterr().out
        assert partial.read_bytes() == reference

    def test_parallel_matches_serial_bytes(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(config_doc()))
        serial = tmp_path / "serial.csv"
        parallel = tmp_path / "parallel.csv"
        main(["bench", "--config", str(cfg), "--out", str(serial), "--jobs", "1"])
        main(["bench", "--config", str(cfg), "--out", str(parallel), "--jobs", "2"])
        assert serial.read_bytes() == parallel.read_bytes()


class TestInspect:
    def test_dataset_summary(self, dataset_csv, capsys):
        code = main(["inspect", str(dataset_csv)])
        assert code == 0
        text = capsys.readouterr().out
        assert "n=80 d=3" in text
        assert "missing fraction" in text

    def test_model_summary(self, dataset_csv, tmp_path, capsys):
        model = tmp_path / "model.json"
        main(["fit", "--data", str(dataset_csv), "--method", "static",
              "--out", str(model)])
        capsys.readouterr()
        code = main(["inspect", str(model)])
        assert code == 0
        assert "AdaptiveModel" in capsys.readouterr().out

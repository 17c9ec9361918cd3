"""Evaluation metrics and the command-line front end."""

import json
import math

import numpy as np
import pytest

from betacp.cli import main
from betacp.data import load_observations
from betacp.metrics import EvalResult, evaluate, mae, rmse
from betacp.model import load_model


class TestMetrics:
    def test_mae_hand_case(self):
        assert mae([1.0, 2.0], [2.0, 4.0]) == 1.5

    def test_rmse_hand_case(self):
        assert rmse([1.0, 2.0], [2.0, 4.0]) == math.sqrt(2.5)

    def test_single_pair(self):
        assert mae([0.0], [3.125]) == 3.125
        assert rmse([0.0], [3.125]) == 3.125

    def test_perfect_predictions(self):
        vals = np.linspace(0.0, 5.0, 17)
        assert mae(vals, vals) == 0.0
        assert rmse(vals, vals) == 0.0

    def test_evaluate_bundles_both(self):
        result = evaluate([1.0, 2.0], [2.0, 4.0])
        assert result == EvalResult(mae=1.5, rmse=math.sqrt(2.5), count=2)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mae([1.0], [1.0, 2.0])

    def test_empty_inputs(self):
        with pytest.raises(ValueError):
            rmse([], [])

    def test_shapes_are_flattened(self):
        pred = np.array([[1.0, 2.0]])
        truth = np.array([2.0, 4.0])
        assert mae(pred, truth) == 1.5


# ---------------------------------------------------------------------------
# CLI: every command invoked in-process through main(argv) -> exit code
# ---------------------------------------------------------------------------


def run(args):
    return main([str(a) for a in args])


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture()
def dataset(workdir):
    """A small planted observation file plus its split files."""
    assert run(["synth", "--dims", "12,10,6", "--rank", "2", "--density", "0.3",
                "--noise-sigma", "0.02", "--seed", "5", "--out", "data.csv",
                "--model", "truth.json"]) == 0
    assert run(["split", "--data", "data.csv", "--split", "7:1:2",
                "--seed", "5"]) == 0
    return workdir


class TestPipeline:
    def test_synth_writes_loadable_csv(self, dataset):
        tensor = load_observations(dataset / "data.csv")
        assert len(tensor) == 216  # 0.3 of 12*10*6
        assert tensor.dims == (12, 10, 6)

    def test_split_files_partition_the_data(self, dataset):
        full = load_observations(dataset / "data.csv")
        parts = [load_observations(dataset / f"data.{name}.csv", dims=full.dims)
                 for name in ("train", "validation", "test")]
        assert sum(len(p) for p in parts) == len(full)
        manifest = json.loads((dataset / "data.manifest.json").read_text())
        assert manifest["counts"]["train"] == len(parts[0])

    def test_train_eval_predict_round_trip(self, dataset, capsys):
        assert run(["train", "--data", "data.csv", "--rank", "2", "--beta", "2",
                    "--lambda", "0.0001", "--lambda-b", "0.0001",
                    "--max-iters", "60", "--seed", "5",
                    "--model", "m.json", "--report", "r.csv"]) == 0
        assert run(["eval", "--model", "m.json", "--data", "data.test.csv",
                    "--out", "eval.json"]) == 0
        out = capsys.readouterr().out
        assert "rmse=" in out and "mae=" in out
        scored = json.loads((dataset / "eval.json").read_text())
        assert scored["count"] == 43
        assert scored["rmse"] < 0.1  # small noise, matched rank

        assert run(["predict", "--model", "m.json", "--data", "data.test.csv",
                    "--out", "pred.csv"]) == 0
        model = load_model(dataset / "m.json")
        test = load_observations(dataset / "data.test.csv", dims=model.dims)
        expected = model.predict(test.i_idx, test.j_idx, test.k_idx)
        lines = (dataset / "pred.csv").read_text().splitlines()
        assert lines[0] == "# i,j,k,yhat"
        got = np.array([float(line.split(",")[3]) for line in lines[1:]])
        np.testing.assert_array_equal(got, expected)

    def test_report_csv_shape(self, dataset):
        assert run(["train", "--data", "data.csv", "--rank", "2",
                    "--max-iters", "10", "--seed", "5",
                    "--model", "m.json", "--report", "r.csv"]) == 0
        lines = (dataset / "r.csv").read_text().splitlines()
        assert lines[0] == "iter,objective,val_rmse,elapsed_ms"
        assert len(lines) >= 2
        assert lines[1].split(",")[0] == "1"

    def test_predict_to_stdout(self, dataset, capsys):
        run(["train", "--data", "data.csv", "--rank", "2", "--max-iters", "5",
             "--seed", "5", "--model", "m.json", "--report", "r.csv"])
        capsys.readouterr()
        assert run(["predict", "--model", "m.json", "--data",
                    "data.test.csv"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "# i,j,k,yhat"
        assert len(out) == 44

    def test_model_meta_records_run(self, dataset):
        run(["train", "--data", "data.csv", "--rank", "2", "--beta", "1.5",
             "--max-iters", "5", "--seed", "5",
             "--model", "m.json", "--report", "r.csv"])
        doc = json.loads((dataset / "m.json").read_text())
        assert doc["meta"]["beta"] == 1.5
        assert doc["meta"]["rank"] == 2
        assert doc["meta"]["seed"] == 5

    def test_adapt_writes_swarm_trajectory(self, dataset):
        assert run(["adapt", "--data", "data.csv", "--rank", "2",
                    "--max-iters", "2", "--seed", "1",
                    "--model", "am.json", "--report", "swarm.csv"]) == 0
        lines = (dataset / "swarm.csv").read_text().splitlines()
        assert lines[0] == "round,particle,beta,lambda,lambda_b,fitness,gbest_fitness"
        assert len(lines) == 1 + 20 * 2  # default swarm size, two rounds
        doc = json.loads((dataset / "am.json").read_text())
        assert doc["meta"]["adapted"] is True

    def test_train_adaptive_flag_delegates(self, dataset, capsys):
        assert run(["train", "--data", "data.csv", "--rank", "2", "--adaptive",
                    "--max-iters", "2", "--seed", "1",
                    "--model", "am.json", "--report", "swarm.csv"]) == 0
        assert "swarm: particles=20" in capsys.readouterr().out


class TestExitCodes:
    def test_missing_required_flag(self, workdir, capsys):
        assert run(["train"]) == 1
        assert "--data is required" in capsys.readouterr().err

    def test_unknown_subcommand(self, workdir):
        assert run(["conjure"]) == 1

    def test_unreadable_data(self, workdir, capsys):
        assert run(["train", "--data", "absent.csv"]) == 2
        assert "cannot open" in capsys.readouterr().err

    def test_malformed_data(self, workdir):
        (workdir / "bad.csv").write_text("0,0\n")
        assert run(["train", "--data", "bad.csv"]) == 2

    def test_divergence(self, workdir, capsys):
        lines = "\n".join(
            f"{i},{j},{k},1e300"
            for i, j, k in [(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0),
                            (2, 1, 1), (2, 0, 0)]
        )
        (workdir / "huge.csv").write_text(lines + "\n")
        assert run(["train", "--data", "huge.csv", "--rank", "2", "--beta", "3",
                    "--split", "4:1:1", "--max-iters", "10", "--seed", "0"]) == 3
        assert "divergence" in capsys.readouterr().err

    def test_bad_split_ratio(self, workdir):
        (workdir / "d.csv").write_text("0,0,0,1.0\n1,1,1,2.0\n2,2,2,3.0\n")
        assert run(["split", "--data", "d.csv", "--split", "1:2"]) == 1

    def test_version_and_help(self, capsys):
        assert run(["--version"]) == 0
        assert run(["--help"]) == 0
        capsys.readouterr()


class TestConfigFile:
    def test_config_supplies_missing_flags(self, dataset, capsys):
        (dataset / "cfg.json").write_text(json.dumps({
            "data": "data.csv", "rank": 2, "beta": 1.0,
            "lambda": 0.001, "max_iters": 5,
        }))
        assert run(["train", "--config", "cfg.json", "--seed", "3",
                    "--model", "m.json", "--report", "r.csv"]) == 0
        assert "beta=1.0 lambda=0.001" in capsys.readouterr().out

    def test_flags_beat_config(self, dataset, capsys):
        (dataset / "cfg.json").write_text(json.dumps({
            "data": "data.csv", "rank": 2, "beta": 1.0, "max_iters": 5,
        }))
        assert run(["train", "--config", "cfg.json", "--beta", "2.5",
                    "--seed", "3", "--model", "m.json",
                    "--report", "r.csv"]) == 0
        assert "beta=2.5" in capsys.readouterr().out

    def test_unknown_key_rejected(self, workdir, capsys):
        (workdir / "cfg.json").write_text('{"mystery": 1}')
        assert run(["train", "--config", "cfg.json"]) == 1
        assert "unknown config key" in capsys.readouterr().err

    def test_invalid_json_rejected(self, workdir):
        (workdir / "cfg.json").write_text("{nope")
        assert run(["train", "--config", "cfg.json"]) == 1

    def test_missing_config_file(self, workdir):
        assert run(["train", "--config", "ghost.json"]) == 1

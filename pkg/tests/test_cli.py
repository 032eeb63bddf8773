import json

import numpy as np
import pytest

from ppboost import io
from ppboost.cli import main
from ppboost.geometry import Window
from ppboost.trainer import Ensemble


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Simulated data set shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    rc = main([
        "simulate", "--process", "poisson", "--beta", "0.6",
        "--intensity", "loglinear2", "--grid", "12", "--seed", "3",
        "--target-count", "120",
        "--out-pattern", str(root / "pattern.csv"),
        "--out-covariates", str(root / "covs"),
        "--out-truth", str(root / "truth.csv"),
    ])
    assert rc == 0
    return root


class TestSimulate:
    def test_outputs_exist_and_parse(self, workspace):
        stack = io.read_covariates(workspace / "covs")
        assert stack.p == 2 and stack.nx == 12
        pattern = io.read_pattern_csv(workspace / "pattern.csv", stack.window)
        assert pattern.n > 0
        truth = io.read_values_csv(workspace / "truth.csv")
        assert truth.size == 144
        # calibrated: truth integrates to the target count
        assert stack.grid().integrate(truth) == pytest.approx(120.0, rel=1e-9)

    def test_lgcp_and_thomas_run(self, tmp_path):
        for proc, extra in (("lgcp", ["--tau2", "0.5", "--sigma", "0.05"]),
                            ("thomas", ["--kappa", "40", "--sigma", "0.05"])):
            rc = main([
                "simulate", "--process", proc, "--beta", "0.4",
                "--grid", "10", "--seed", "1", "--target-count", "60",
                "--out-pattern", str(tmp_path / f"{proc}.csv"),
                "--out-covariates", str(tmp_path / f"{proc}_covs"),
            ] + extra)
            assert rc == 0


class TestFitPredictEval:
    def test_fit_predict_eval_roundtrip(self, workspace):
        model_path = workspace / "model.json"
        rc = main([
            "fit", "--pattern", str(workspace / "pattern.csv"),
            "--covariates", str(workspace / "covs"), "--loss", "p",
            "--K", "6", "--gamma", "2", "--eta", "0.3",
            "--parallel-trees", "2", "--depth", "3", "--seed", "5",
            "--out", str(model_path),
        ])
        assert rc == 0
        model = Ensemble.load(model_path)
        assert model.n_iterations == 6

        rc = main([
            "predict", "--model", str(model_path),
            "--covariates", str(workspace / "covs"),
            "--out", str(workspace / "logint.csv"),
        ])
        assert rc == 0
        values = io.read_values_csv(workspace / "logint.csv")
        assert values.size == 144 and np.all(np.isfinite(values))

        out_json = workspace / "eval.json"
        rc = main([
            "eval", "--model", str(model_path),
            "--pattern", str(workspace / "pattern.csv"),
            "--covariates", str(workspace / "covs"),
            "--truth", str(workspace / "truth.csv"),
            "--metrics", "loglik,iae,kfold", "--folds", "4",
            "--K", "4", "--gamma", "2", "--eta", "0.3",
            "--parallel-trees", "2", "--depth", "2",
            "--out", str(out_json),
        ])
        assert rc == 0
        payload = json.loads(out_json.read_text())
        assert set(payload) == {"loglik", "iae", "kfold"}
        assert payload["iae"] >= 0.0

    def test_weighted_fit(self, workspace):
        rc = main([
            "fit", "--pattern", str(workspace / "pattern.csv"),
            "--covariates", str(workspace / "covs"), "--loss", "wp",
            "--K", "4", "--gamma", "2", "--eta", "0.3", "--m", "0.06",
            "--parallel-trees", "2", "--depth", "2", "--seed", "5",
            "--out", str(workspace / "model_wp.json"),
        ])
        assert rc == 0


class TestCv:
    def test_cv_report(self, workspace):
        out = workspace / "cv.json"
        rc = main([
            "cv", "--pattern", str(workspace / "pattern.csv"),
            "--covariates", str(workspace / "covs"),
            "--K-max", "4", "--gamma-set", "2,8", "--eta-set", "0.3",
            "--parallel-trees", "2", "--depth", "2", "--seed", "1",
            "--out", str(out),
        ])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert payload["selected"]["K"] <= 4
        assert len(payload["curves"]) == 2


class TestKfn:
    def test_matches_hand_value(self, tmp_path):
        pattern_path = tmp_path / "two.csv"
        pattern_path.write_text("x,y\n0.2,0.2\n0.2,0.25\n")
        lam_path = tmp_path / "lam.csv"
        io.write_values_csv(np.array([400.0, 400.0]), lam_path)
        out = tmp_path / "k.json"
        rc = main([
            "kfn", "--pattern", str(pattern_path),
            "--intensity", str(lam_path), "--m", "0.06",
            "--out", str(out),
        ])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert payload["k_hat"] == pytest.approx(2 / (400**2 * 0.95), rel=1e-9)
        assert payload["excess"] == 0.0

    def test_bad_m_exits_nonzero(self, tmp_path, capsys):
        pattern_path = tmp_path / "two.csv"
        pattern_path.write_text("x,y\n0.2,0.2\n0.2,0.25\n")
        lam_path = tmp_path / "lam.csv"
        io.write_values_csv(np.array([400.0, 400.0]), lam_path)
        rc = main([
            "kfn", "--pattern", str(pattern_path),
            "--intensity", str(lam_path), "--m", "2.0",
        ])
        assert rc == 2


class TestBench:
    def test_scenario_csv(self, tmp_path):
        scenario = {
            "name": "cli-smoke", "process": "poisson",
            "intensity": "loglinear2", "beta": 0.5,
            "expected_count": 70.0, "grid_n": 10, "field_knots": None,
            "replicates": 2, "rng_seed": 4, "max_depth": 2,
            "parallel_trees": 2, "feature_fraction": 0.34,
            "cv": {"k_max": 3, "gammas": [5.0], "etas": [0.2]},
        }
        spath = tmp_path / "scenario.json"
        spath.write_text(json.dumps(scenario))
        out = tmp_path / "results.csv"
        rc = main(["bench", "--scenario", str(spath), "--jobs", "1",
                   "--out", str(out)])
        assert rc == 0
        text = out.read_text()
        assert text.startswith("scenario_id,method,metric,mean,std,n_replicates")
        assert "cli-smoke" in text

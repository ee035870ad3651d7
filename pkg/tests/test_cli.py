import json

import numpy as np
import pandas as pd
import pytest

from robustgamma import __version__, cli
from robustgamma.estimation import FitResult, Method


@pytest.fixture
def sweep_csv(tmp_path, sweep_data_outlier):
    path = tmp_path / "sweep.csv"
    pd.DataFrame({"cost": sweep_data_outlier.y, "x": sweep_data_outlier.x[:, 1]}).to_csv(path, index=False)
    return path


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestFit:
    def test_json_fields(self, capsys, sweep_csv):
        code, out, _ = run(capsys, "fit", "--data", sweep_csv, "--response", "cost", "--model", "robust", "--c", 1.6, "--seed", 3)
        assert code == 0
        doc = json.loads(out)
        for key in ("beta", "nu", "loglik", "pearson_residuals"):
            assert key in doc
        assert len(doc["beta"]) == 2 and len(doc["pearson_residuals"]) == 20
        assert doc["version"] == __version__ and doc["seed"] == 3
        assert doc["config"]["c"] == 1.6 and doc["config"]["model"] == "robust"
        assert doc["columns"] == ["(Intercept)", "x"]

    def test_missing_column(self, capsys, sweep_csv):
        code, out, err = run(capsys, "fit", "--data", sweep_csv, "--response", "charges")
        assert code == 1 and out == ""
        assert "column not found" in json.loads(err)["error"]

    def test_not_converged_exit_two(self, capsys, sweep_csv, monkeypatch):
        def stuck(data, c=1.6, **kw):
            return FitResult(np.zeros(data.p), 10.0, Method.ROBUST_MLE, -1.0, False, 5, 1.0, c=c, message="stuck")

        monkeypatch.setattr(cli, "fit_robust_mle", stuck)
        code, out, _ = run(capsys, "fit", "--data", sweep_csv, "--response", "cost")
        assert code == 2
        assert json.loads(out)["result"]["converged"] is False

    def test_cantoni_between(self, capsys, sweep_csv):
        slopes = {}
        for model, c in (("gamma", None), ("robust", 1.6), ("cantoni", 1.5)):
            argv = ["fit", "--data", sweep_csv, "--response", "cost", "--model", model]
            if c is not None:
                argv += ["--c", c]
            code, out, _ = run(capsys, *argv)
            assert code == 0
            slopes[model] = json.loads(out)["beta"][1]
        lo, hi = sorted([slopes["gamma"], slopes["robust"]])
        assert lo < slopes["cantoni"] < hi

    def test_csv_format_rejected(self, capsys, sweep_csv):
        code, _, err = run(capsys, "fit", "--data", sweep_csv, "--response", "cost", "--format", "csv")
        assert code == 1 and "error" in json.loads(err)

    def test_categorical_and_no_intercept(self, capsys, tmp_path, sweep_data_outlier):
        path = tmp_path / "cat.csv"
        kind = np.where(np.arange(20) % 3 == 0, "urgent", "planned")
        pd.DataFrame({"cost": sweep_data_outlier.y, "x": sweep_data_outlier.x[:, 1], "adm": kind}).to_csv(path, index=False)
        code, out, _ = run(capsys, "fit", "--data", path, "--response", "cost", "--model", "gamma")
        assert code == 0
        assert json.loads(out)["columns"] == ["(Intercept)", "x", "adm_urgent"]
        code, out, _ = run(capsys, "fit", "--data", path, "--response", "cost", "--model", "gamma", "--no-intercept")
        assert code == 0
        assert json.loads(out)["columns"] == ["x", "adm_urgent"]

    def test_output_file(self, capsys, tmp_path, sweep_csv):
        target = tmp_path / "fit.json"
        code, out, _ = run(capsys, "fit", "--data", sweep_csv, "--response", "cost", "-o", target)
        assert code == 0 and out == ""
        assert json.loads(target.read_text())["command"] == "fit"


BAYES_FAST = ("--iterations", 200, "--adapt-iterations", 200, "--leapfrog", 10)


class TestBayes:
    def test_summary_and_reproducible(self, capsys, sweep_csv):
        outs = []
        for _ in range(2):
            code, out, _ = run(capsys, "bayes", "--data", sweep_csv, "--response", "cost", "--seed", 11, *BAYES_FAST)
            assert code == 0
            outs.append(out.encode())
        assert outs[0] == outs[1]
        doc = json.loads(outs[0])
        assert [row["parameter"] for row in doc["summary"]] == ["(Intercept)", "x", "nu"]
        for row in doc["summary"]:
            assert row["hpd_lower"] <= row["mean"] <= row["hpd_upper"]
        assert doc["draws_kept"] == 180
        assert len(doc["residuals"]) == 20
        assert doc["seed"] == 11

    def test_different_seed_differs(self, capsys, sweep_csv):
        outs = []
        for seed in (1, 2):
            code, out, _ = run(capsys, "bayes", "--data", sweep_csv, "--response", "cost", "--model", "gamma", "--seed", seed, *BAYES_FAST)
            assert code == 0
            outs.append(json.loads(out)["summary"])
        assert outs[0] != outs[1]

    def test_refuses_n_below_p(self, capsys, tmp_path):
        path = tmp_path / "tiny.csv"
        pd.DataFrame({"cost": [1.0, 2.0], "a": [0.1, 0.5], "b": [1.0, -1.0]}).to_csv(path, index=False)
        code, out, err = run(capsys, "bayes", "--data", path, "--response", "cost", *BAYES_FAST)
        assert code == 1 and out == ""
        assert "proper" in json.loads(err)["error"]

    def test_acceptance_warning(self, capsys, sweep_csv):
        code, out, _ = run(
            capsys, "bayes", "--data", sweep_csv, "--response", "cost", "--model", "gamma",
            "--iterations", 100, "--no-adapt", "--step-size", 3.0, "--leapfrog", 5,
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["accept_rate"] < 0.2
        assert any("acceptance rate" in w for w in doc["warnings"])

    def test_chain_csv(self, capsys, tmp_path, sweep_csv):
        target = tmp_path / "chain.csv"
        code, _, _ = run(
            capsys, "bayes", "--data", sweep_csv, "--response", "cost", "--model", "gamma", *BAYES_FAST, "--chain-csv", target
        )
        assert code == 0
        chain = pd.read_csv(target, comment="#")
        assert list(chain.columns) == ["(Intercept)", "x", "eta", "log_post"] and len(chain) == 180

    def test_cantoni_rejected(self, capsys, sweep_csv):
        code, _, err = run(capsys, "bayes", "--data", sweep_csv, "--response", "cost", "--model", "cantoni")
        assert code == 1 and "error" in json.loads(err)


class TestSimulate:
    def test_scenario_csv(self, capsys, tmp_path):
        target = tmp_path / "s1.csv"
        code, _, _ = run(
            capsys, "simulate", "--scenario", "S1", "--n", 20, "--replicates", 100, "--c", 1.6, "--seed", 4, "-o", target
        )
        assert code == 0
        text = target.read_text()
        assert text.startswith(f"# version: {__version__}\n# seed: 4\n# config: ")
        table = pd.read_csv(target, comment="#")
        for col in ("scenario", "n", "estimator", "c", "M_gamma", "M_R", "premium", "protection"):
            assert col in table.columns
        assert set(table["scenario"]) == {"S0", "S1"}
        assert table.loc[table["scenario"] == "S0", "protection"].isna().all()
        assert table.loc[table["scenario"] == "S1", "protection"].notna().all()

    def test_s0_protection_absent_in_json(self, capsys):
        code, out, _ = run(capsys, "simulate", "--scenario", "S0", "--n", 20, "--replicates", 100, "--c", 1.6, "--format", "json")
        assert code == 0
        cells = json.loads(out)["report"]["cells"]
        assert cells and all("protection" not in cell for cell in cells)

    @pytest.mark.parametrize(
        "argv",
        [
            ["--scenario", "S7"],
            ["--n", "30"],
            ["--scenario", "S1", "--replicates", "50"],
            ["--n", "twenty"],
        ],
    )
    def test_invalid_input(self, capsys, argv):
        code, out, err = run(capsys, "simulate", *argv)
        assert code == 1 and out == ""
        assert "error" in json.loads(err)

    def test_sweep(self, capsys, tmp_path):
        target = tmp_path / "sweep.csv"
        code, _, _ = run(capsys, "simulate", "--sweep", "--c", 1.6, "-o", target)
        assert code == 0
        table = pd.read_csv(target, comment="#")
        for col in ("y_n", "estimator", "beta1", "beta2", "nu"):
            assert col in table.columns
        assert {"GammaMLE", "RobustMLE"} <= set(table["estimator"])

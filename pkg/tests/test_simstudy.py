import io
import json
import math

import numpy as np
import pandas as pd
import pytest

from robustgamma import simstudy
from robustgamma.estimation import fit_gamma_mle
from robustgamma.simstudy import (
    BETA_TRUE,
    CSV_COLUMNS,
    DEFAULT_C_GRID,
    NU_TRUE,
    PremiumProtectionReport,
    ScenarioError,
    ScenarioId,
    ScenarioSpec,
    aggregate,
    contaminate,
    generate_base,
    moving_outlier_sweep,
    run_replicate,
    run_scenario,
    run_study,
    standardized_design,
)
from robustgamma.special import make_rng


class TestDesign:
    @pytest.mark.parametrize("n", [2, 20, 40, 1000])
    def test_standardized(self, n):
        x = standardized_design(n)
        assert np.all(x[:, 0] == 1)
        assert abs(x[:, 1].mean()) <= 1e-12
        assert abs(x[:, 1].std() - 1) <= 1e-12

    def test_mean_of_responses(self):
        reps = 100_000
        rng = make_rng(3)
        total = np.zeros(20)
        for _ in range(reps):
            total += generate_base(20, rng).y
        mu = np.exp(standardized_design(20) @ BETA_TRUE)
        se = mu / math.sqrt(NU_TRUE) / math.sqrt(reps)
        assert np.all(np.abs(total / reps - mu) <= 3 * se)

    def test_reproducible(self):
        a = generate_base(20, make_rng(4)).y
        b = generate_base(20, make_rng(4)).y
        assert np.array_equal(a, b)


class TestScenarios:
    def test_invariants(self):
        with pytest.raises(ScenarioError):
            ScenarioSpec(ScenarioId.S1, 20, 0.05, 3.0, False)
        with pytest.raises(ScenarioError):
            ScenarioSpec(ScenarioId.S3, 20, 0.05, 3.0, False)
        with pytest.raises(ScenarioError):
            ScenarioSpec(ScenarioId.S0, 20, 0.05, 0.0, False)
        with pytest.raises(ScenarioError):
            ScenarioSpec.standard("S1", 30)
        with pytest.raises(ScenarioError):
            ScenarioSpec.standard("S9", 20)
        with pytest.raises(ScenarioError):
            ScenarioSpec.standard("S1", 20, replicates=0)

    def test_standard_table(self):
        s = ScenarioSpec.standard("S4", 40)
        assert (s.contamination_fraction, s.shift, s.leverage) == (0.10, 3.0, True)
        assert s.c_grid == DEFAULT_C_GRID
        assert DEFAULT_C_GRID[0] == 1.2 and DEFAULT_C_GRID[-1] == 2.0 and len(DEFAULT_C_GRID) == 9

    @pytest.mark.parametrize("sid, n, count", [("S1", 20, 1), ("S2", 20, 2), ("S1", 40, 2), ("S2", 40, 4), ("S0", 20, 0)])
    def test_counts(self, sid, n, count):
        assert ScenarioSpec.standard(sid, n).contaminated_count == count


class TestContaminate:
    def test_no_shift_unchanged(self):
        base = generate_base(20, make_rng(0))
        out = contaminate(base, ScenarioSpec.standard("S0", 20), make_rng(1))
        assert np.array_equal(out.y, base.y) and np.array_equal(out.x, base.x)

    def test_single_point_shift(self):
        base = generate_base(20, make_rng(0))
        out = contaminate(base, ScenarioSpec.standard("S1", 20), make_rng(1))
        changed = np.flatnonzero(out.y != base.y)
        assert changed.size == 1
        i = changed[0]
        mu = math.exp(base.x[i] @ BETA_TRUE)
        assert out.y[i] == pytest.approx(base.y[i] + 7 * mu / math.sqrt(40), rel=1e-14)
        assert np.array_equal(out.x, base.x)

    def test_leverage(self):
        base = generate_base(20, make_rng(0))
        out = contaminate(base, ScenarioSpec.standard("S4", 20), make_rng(1))
        rows = np.flatnonzero(np.any(out.x != base.x, axis=1))
        assert rows.size == 2
        # max of the standardized 1..20 is 9.5 / sqrt(399 / 12)
        assert np.allclose(out.x[rows, 1], 1.5 * 9.5 / math.sqrt(399 / 12), rtol=1e-14)
        assert out.x[rows[0], 1] == pytest.approx(1.5 * 1.6475, abs=1e-4)
        # shift-then-replace: the shift uses the mean at the original covariate
        mu = np.exp(base.x[rows] @ BETA_TRUE)
        assert np.allclose(out.y[rows], base.y[rows] + 3 * mu / math.sqrt(40), rtol=1e-14)

    def test_leverage_first_reading(self):
        base = generate_base(20, make_rng(0))
        out = contaminate(base, ScenarioSpec.standard("S3", 20, shift_before_leverage=False), make_rng(1))
        i = np.flatnonzero(np.any(out.x != base.x, axis=1))[0]
        mu_new = math.exp(out.x[i] @ BETA_TRUE)
        r = math.sqrt(40) * (base.y[i] - mu_new) / mu_new
        assert out.y[i] == pytest.approx((r + 3) * mu_new / math.sqrt(40) + mu_new, rel=1e-14)

    def test_indices_without_replacement(self):
        base = generate_base(40, make_rng(2))
        for k in range(20):
            out = contaminate(base, ScenarioSpec.standard("S2", 40), make_rng(2, k))
            assert np.count_nonzero(out.y != base.y) == 4


def _errors(gamma, other, c=1.6):
    return {("GammaMLE", None): gamma, ("Cantoni", 1.345): other, ("RobustMLE", c): other}


class TestAggregate:
    def test_identical_errors_zero_protection(self):
        reps = []
        for k in range(10):
            e = (0.01 * (k + 1), float(k + 1))
            reps.append({ScenarioId.S0: _errors(e, e), ScenarioId.S1: _errors(e, e)})
        rows = aggregate(reps, 20, [ScenarioId.S0, ScenarioId.S1], (1.6,))
        for r in rows:
            assert r.premium == 0.0
            if r.scenario == "S1":
                assert r.protection == 0.0

    def test_formulas(self):
        reps = [
            {ScenarioId.S0: _errors((1.0, 4.0), (4.0, 1.0)), ScenarioId.S1: _errors((9.0, 16.0), (1.0, 4.0))},
            {ScenarioId.S0: _errors((1.0, 4.0), (4.0, 1.0)), ScenarioId.S1: _errors((9.0, 16.0), (1.0, 4.0))},
        ]
        rows = aggregate(reps, 20, [ScenarioId.S0, ScenarioId.S1], (1.6,))
        report = PremiumProtectionReport(rows)
        beta = report.cell("S1", 20, "RobustMLE", 1.6, "beta")
        # M_gamma = 3, M_R = 1 on S1; on S0, 1 and 2
        assert (beta.M_gamma, beta.M_R) == (3.0, 1.0)
        assert beta.protection == pytest.approx(2 / 3)
        assert beta.premium == pytest.approx(1.0)
        nu = report.cell("S1", 20, "RobustMLE", 1.6, "nu")
        assert nu.protection == pytest.approx(0.5)
        assert nu.premium == pytest.approx(-0.5)

    def test_s0_has_no_protection(self):
        e = (1.0, 1.0)
        rows = aggregate([{ScenarioId.S0: _errors(e, e)}] * 3, 20, [ScenarioId.S0], (1.6,))
        assert all(r.protection is None for r in rows)

    def test_failure_cap(self):
        good = (1.0, 1.0)
        reps = []
        for k in range(100):
            other = None if k < 3 else good
            reps.append({ScenarioId.S0: _errors(good, good), ScenarioId.S1: _errors(good, other)})
        rows = aggregate(reps, 20, [ScenarioId.S0, ScenarioId.S1], (1.6,))
        cell = PremiumProtectionReport(rows).cell("S1", 20, "RobustMLE", 1.6, "beta")
        assert not cell.valid
        assert cell.failures == 3 and cell.replicates == 97
        assert math.isnan(cell.premium) and math.isnan(cell.protection)
        reps[0][ScenarioId.S1] = _errors(good, good)
        reps[1][ScenarioId.S1] = _errors(good, good)
        cell = PremiumProtectionReport(aggregate(reps, 20, [ScenarioId.S0, ScenarioId.S1], (1.6,))).cell(
            "S1", 20, "RobustMLE", 1.6, "beta")
        assert cell.valid and cell.failures == 1


@pytest.fixture(scope="module")
def small():
    specs = [ScenarioSpec.standard(s, 20, replicates=12, seed=5, c_grid=(1.6,)) for s in ("S1", "S3")]
    return run_study(specs)


@pytest.fixture(scope="module")
def table():
    return moving_outlier_sweep(1.6, np.linspace(6, 15, 19), seed=0)


class TestStudy:
    def test_csv_columns(self, small):
        frame = pd.read_csv(io.StringIO(small.to_csv()))
        assert list(frame.columns) == CSV_COLUMNS
        s0 = frame[frame.scenario == "S0"]
        assert len(s0) > 0 and s0.protection.isna().all()
        assert set(frame.scenario) == {"S0", "S1", "S3"}

    def test_json(self, small):
        payload = json.loads(small.to_json())
        assert payload["config"]["seed"] == 5
        s0 = [c for c in payload["cells"] if c["scenario"] == "S0"]
        assert s0 and all("protection" not in c for c in s0)

    def test_deterministic_and_worker_invariant(self, small):
        specs = [ScenarioSpec.standard(s, 20, replicates=12, seed=5, c_grid=(1.6,)) for s in ("S1", "S3")]
        again = run_study(specs, workers=2)
        assert again.to_csv() == small.to_csv()

    def test_common_random_numbers(self, monkeypatch):
        seen = []
        monkeypatch.setattr(simstudy, "_fit_all", lambda data, c_grid: seen.append(data) or {})
        run_replicate(20, 3, 9, [ScenarioSpec.standard("S1", 20), ScenarioSpec.standard("S2", 20)], (1.6,))
        base, s1, s2 = seen
        assert np.count_nonzero(s1.y != base.y) == 1
        assert np.count_nonzero(s2.y != base.y) == 2

    def test_huge_c_has_no_premium(self):
        report = run_study([ScenarioSpec.standard("S1", 20, replicates=15, seed=2, c_grid=(1e6,))])
        for target in ("beta", "nu"):
            cell = report.cell("S0", 20, "RobustMLE", 1e6, target)
            assert abs(cell.premium) <= 1e-6

    def test_scenario_needs_hundred_replicates(self):
        with pytest.raises(ScenarioError):
            run_scenario(ScenarioSpec.standard("S1", 20, replicates=50))

    def test_mixed_specs_rejected(self):
        with pytest.raises(ScenarioError):
            run_study([ScenarioSpec.standard("S1", 20, seed=1), ScenarioSpec.standard("S2", 20, seed=2)])


class TestSweep:
    def test_columns(self, table):
        assert {"y_n", "estimator", "beta1", "beta2", "nu"} <= set(table.columns)
        assert set(table.estimator) == {"GammaMLE", "Cantoni", "RobustMLE", "Reference"}
        assert not table.flagged.any()

    def test_gamma_nu_decreasing(self, table):
        nu = table[table.estimator == "GammaMLE"].sort_values("y_n").nu.to_numpy()
        assert np.all(np.diff(nu) < 0)

    def test_robust_closer_at_fifteen(self, table):
        at = table[table.y_n == 15.0].set_index("estimator")
        for col in ("beta1", "beta2", "nu"):
            ref = at.loc["Reference", col]
            assert abs(at.loc["RobustMLE", col] - ref) < abs(at.loc["GammaMLE", col] - ref), col

    def test_bulk_agreement(self, table):
        # Monte Carlo spread of the gamma MLE at this design, from 60 fresh datasets
        fits = [fit_gamma_mle(generate_base(20, make_rng(1000 + k))) for k in range(60)]
        sd = {
            "beta1": np.std([f.beta[0] for f in fits], ddof=1),
            "beta2": np.std([f.beta[1] for f in fits], ddof=1),
            "nu": np.std([f.nu for f in fits], ddof=1),
        }
        at = table[table.y_n == 6.0].set_index("estimator")
        names = ["GammaMLE", "Cantoni", "RobustMLE"]
        for col, s in sd.items():
            values = at.loc[names, col].to_numpy()
            assert values.max() - values.min() <= 2 * s, col

    def test_failed_fit_flagged(self, monkeypatch):
        def boom(*args, **kwargs):
            raise RuntimeError("no")

        monkeypatch.setattr(simstudy, "fit_robust_mle", boom)
        table = moving_outlier_sweep(1.6, [15.0], seed=0)
        row = table[table.estimator == "RobustMLE"].iloc[0]
        assert row.flagged and math.isnan(row.beta2)

    def test_invalid(self):
        with pytest.raises(ValueError):
            moving_outlier_sweep(-1.0)
        with pytest.raises(ValueError):
            moving_outlier_sweep(1.6, [])

"""Sweep harnesses: plan validation, report mechanics, small seeded runs."""

import csv
import math

import numpy as np
import pytest

from bridgeint.convergence import (
    CSV_COLUMNS,
    ConvergenceReport,
    EndpointRule,
    ReportRow,
    SweepPlan,
    density_ratio_sweep,
    run_lemma4,
    run_theorem1,
    run_theorem2,
    scaling_restatement,
)
from bridgeint.potentials import Potential

BALL = Potential.ball_indicator(3, 1.0)
ZERO = Potential.ball_indicator(3, 1.0, height=0.0)


class TestEndpointRule:
    def test_fixed(self):
        rule = EndpointRule("fixed", [1.0, 0.0, 0.0])
        assert np.allclose(rule.y_at(123.0, 3), [1.0, 0.0, 0.0])

    def test_sqrt_growth(self):
        rule = EndpointRule("sqrt_t", 2.0)
        y = rule.y_at(25.0, 3)
        assert np.allclose(y, [10.0, 0.0, 0.0])
        # |y(t)|^2 / t stays constant, bounded away from 0 and infinity
        assert float(y @ y) / 25.0 == pytest.approx(4.0)

    def test_fourth_root_growth(self):
        rule = EndpointRule("fourth_root", 1.0)
        ratios = [float(rule.y_at(t, 3) @ rule.y_at(t, 3)) / t for t in (1e2, 1e4, 1e6)]
        assert ratios[0] > ratios[1] > ratios[2]

    def test_invalid(self):
        with pytest.raises(ValueError):
            EndpointRule("linear", 1.0)
        with pytest.raises(ValueError):
            EndpointRule("sqrt_t", 0.0)


class TestSweepPlanValidation:
    def test_horizons_increasing(self):
        with pytest.raises(ValueError):
            SweepPlan(theorem="T1", horizons=(10.0, 10.0), x=np.zeros(3), y=np.zeros(3))

    def test_theorem2_rule_mismatch(self):
        with pytest.raises(ValueError):
            SweepPlan(theorem="T2b", horizons=(10.0, 100.0), x=np.zeros(3),
                      endpoint_rule=EndpointRule("fourth_root", 1.0))
        with pytest.raises(ValueError):
            SweepPlan(theorem="T2a", horizons=(10.0, 100.0), x=np.zeros(3),
                      endpoint_rule=EndpointRule("sqrt_t", 1.0))

    def test_lemma4_needs_sequence(self):
        with pytest.raises(ValueError):
            SweepPlan(theorem="L4a", horizons=(10.0, 100.0), x=np.zeros(3))

    def test_escaping_branch_needs_growing_norms(self):
        with pytest.raises(ValueError):
            SweepPlan(theorem="L4b", horizons=(10.0, 100.0), x=np.zeros(3),
                      x_sequence=([5.0, 0, 0], [4.0, 0, 0]))

    def test_budget_lookup(self):
        plan = SweepPlan(theorem="T1", horizons=(1.0, 2.0, 4.0), x=np.zeros(3),
                         y=np.zeros(3), budgets=(100, 200, 300))
        assert plan.budget_for(2) == 300
        plan = SweepPlan(theorem="T1", horizons=(1.0, 2.0), x=np.zeros(3),
                         y=np.zeros(3), budgets=150)
        assert plan.budget_for(1) == 150

    def test_plan_theorem_mismatch_at_run(self):
        plan = SweepPlan(theorem="T1", horizons=(1.0, 2.0), x=np.zeros(3), y=np.zeros(3),
                         budgets=100)
        with pytest.raises(ValueError):
            run_theorem2(plan, BALL)
        with pytest.raises(ValueError):
            run_lemma4(plan, BALL)


class TestReportMechanics:
    def test_csv_round_trip(self, tmp_path):
        report = ConvergenceReport(
            rows=[ReportRow("stat", "1", 10.0, 1.5, 0.1, 2.0, 0.0, 0.5, ""),
                  ReportRow("stat", "1", 100.0, 1.9, 0.1, 2.0, 0.0, 0.1, "PASS")],
            verdicts={"stat/1": "PASS"})
        path = tmp_path / "rows.csv"
        report.write_csv(path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert rows[1][0] == "stat" and rows[2][-1] == "PASS"
        assert float(rows[2][3]) == 1.9

    def test_passed_property(self):
        rep = ConvergenceReport(verdicts={"a": "PASS", "b": "FAIL"})
        assert not rep.passed
        rep = ConvergenceReport(verdicts={"a": "PASS"})
        assert rep.passed


class TestTheorem1:
    def test_zero_potential_all_gaps_zero(self):
        plan = SweepPlan(theorem="T1", horizons=(5.0, 10.0), x=np.zeros(3),
                         y=np.zeros(3), budgets=200, k_list=(1, 2),
                         alphas=(0.0, 0.3), seed=1)
        rep = run_theorem1(plan, ZERO)
        assert all(r.gap == 0.0 for r in rep.rows)
        assert rep.passed

    def test_alpha_zero_row_exact(self):
        plan = SweepPlan(theorem="T1", horizons=(5.0, 10.0), x=np.zeros(3),
                         y=np.zeros(3), budgets=500, k_list=(1,),
                         alphas=(0.0,), seed=2, h_fine=0.05)
        rep = run_theorem1(plan, BALL)
        mgf_rows = [r for r in rep.rows if r.statistic == "bridge_mgf"]
        assert all(r.value == 1.0 and r.gap == 0.0 for r in mgf_rows)

    def test_small_flagship(self):
        plan = SweepPlan(theorem="T1", horizons=(10.0, 80.0), x=np.zeros(3),
                         y=np.zeros(3), budgets=4_000, target_budget=8_000,
                         k_list=(1,), seed=11, h_fine=0.02)
        rep = run_theorem1(plan, BALL)
        assert rep.verdicts["bridge_moment/1"] == "PASS"
        rows = [r for r in rep.rows if r.statistic == "bridge_moment"]
        assert rows[-1].gap < rows[0].gap

    def test_low_dimension_rejected(self):
        with pytest.raises(ValueError):
            run_theorem1(SweepPlan(theorem="T1", horizons=(1.0, 2.0),
                                   x=np.zeros(3), y=np.zeros(3), budgets=10),
                         Potential.ball_indicator(2, 1.0))


class TestTheorem2:
    def test_bounded_ratio_branch(self):
        # the first horizon is short enough to be visibly unconverged
        plan = SweepPlan(theorem="T2b", horizons=(10.0, 400.0), x=np.zeros(3),
                         endpoint_rule=EndpointRule("sqrt_t", 1.0),
                         budgets=4_000, target_budget=8_000, k_list=(1,),
                         seed=21, h_fine=0.02)
        rep = run_theorem2(plan, BALL)
        rows = [r for r in rep.rows if r.statistic == "bridge_moment"]
        assert rows[-1].gap < rows[0].gap
        assert rows[-1].target == pytest.approx(1.0, abs=1e-6)
        combined = math.hypot(rows[-1].std_error, rows[-1].target_error)
        assert rows[-1].gap <= 3.0 * combined + 0.01

    def test_zero_potential(self):
        plan = SweepPlan(theorem="T2a", horizons=(50.0, 100.0), x=np.zeros(3),
                         endpoint_rule=EndpointRule("fourth_root", 1.0),
                         budgets=100, alphas=(0.2,), k_list=(1,), seed=3)
        rep = run_theorem2(plan, ZERO)
        assert all(r.gap == 0.0 for r in rep.rows)
        assert rep.passed


class TestLemma4:
    def test_fixed_start_truncation_only(self):
        # x_n = x: gaps reflect the finite horizon and shrink as it grows
        plan = SweepPlan(theorem="L4a", horizons=(20.0, 200.0, 2000.0),
                         x=np.zeros(3),
                         x_sequence=(np.zeros(3), np.zeros(3), np.zeros(3)),
                         budgets=20_000, target_budget=20_000, k_list=(1,),
                         alphas=(0.0,), seed=31, h_fine=0.02, h_coarse=1.0)
        rep = run_lemma4(plan, BALL)
        rows = [r for r in rep.rows if r.statistic == "free_moment"]
        assert rows[0].gap > rows[-1].gap
        assert rows[-1].target == pytest.approx(1.0, abs=1e-6)

    def test_zero_potential_mgf_identity(self):
        plan = SweepPlan(theorem="L4a", horizons=(10.0, 20.0), x=np.zeros(3),
                         x_sequence=(np.zeros(3), np.zeros(3)), budgets=100,
                         alphas=(0.4,), k_list=(1,), seed=5)
        rep = run_lemma4(plan, ZERO)
        mgf_rows = [r for r in rep.rows if r.statistic == "free_mgf"]
        assert all(r.value == 1.0 for r in mgf_rows)

    def test_escaping_start_mgf_drifts_to_identity(self):
        plan = SweepPlan(theorem="L4b", horizons=(60.0, 120.0, 240.0),
                         x=np.array([4.0, 0, 0]),
                         x_sequence=([4.0, 0, 0], [8.0, 0, 0], [16.0, 0, 0]),
                         budgets=25_000, alphas=(0.5,), k_list=(1,),
                         seed=41, h_fine=0.05, h_coarse=1.0)
        rep = run_lemma4(plan, BALL)
        rows = [r for r in rep.rows if r.statistic == "mgf_minus_one"]
        vals = [r.value for r in rows]
        assert vals[0] > vals[1] > vals[2]
        assert rep.verdicts["mgf_minus_one/0.5"] == "PASS"


class TestDensityRatioSweep:
    def test_fixed_endpoints_decreasing(self):
        rep = density_ratio_sweep(np.zeros(3), np.array([1.0, 0, 0]),
                                  [100.0, 1000.0, 10000.0], BALL)
        assert rep.verdicts["density_ratio_max_dev"] == "PASS"
        assert rep.verdicts["density_ratio_k0"] == "PASS"
        k0 = [r for r in rep.rows if r.statistic == "density_ratio_k0"]
        assert all(r.value == 1.0 for r in k0)

    def test_growing_endpoint_bounded(self):
        rep = density_ratio_sweep(np.zeros(3), None, [100.0, 1000.0, 10000.0],
                                  BALL, endpoint_rule=EndpointRule("sqrt_t", 1.0))
        assert rep.verdicts["density_ratio_bounded"] == "PASS"
        lo, hi = rep.meta["ratio_bounds"]
        assert 0.0 < lo <= hi < math.inf

    def test_u_rule_guard(self):
        with pytest.raises(ValueError):
            density_ratio_sweep(np.zeros(3), np.zeros(3), [2.0], BALL)


class TestScalingRestatement:
    def test_identity_zoom_is_exact(self):
        rep = scaling_restatement(np.zeros(3), np.zeros(3), 10.0, BALL, 1.0,
                                  2_000, seed=51)
        assert rep.rows[0].gap == 0.0
        assert rep.passed

    def test_zero_potential(self):
        rep = scaling_restatement(np.zeros(3), np.zeros(3), 10.0, ZERO, 3.0,
                                  500, seed=52)
        assert rep.rows[0].value == 0.0 and rep.rows[0].target == 0.0
        assert rep.passed

    def test_fixed_horizon_restatement(self):
        # lam = sqrt(t): horizon 1 with the shrunk-support potential
        t = 100.0
        rep = scaling_restatement(np.zeros(3), np.zeros(3), t, BALL,
                                  math.sqrt(t), 4_000, seed=53, h_fine=0.02)
        assert rep.passed

    def test_invalid_zoom(self):
        with pytest.raises(ValueError):
            scaling_restatement(np.zeros(3), np.zeros(3), 1.0, BALL, -1.0, 100)

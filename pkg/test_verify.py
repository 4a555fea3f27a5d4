import numpy as np
import pytest

from rtep.core.exceptions import AssemblyError
from rtep.models.results import McsOptions, TepPlan
from rtep.services.benders import benders_solve
from rtep.services.netcase import build_uncertainty_box, parse_case_text
from rtep.services.verify import (
    acopf_model,
    acopf_solve,
    check_worst_case_dominance,
    draw_samples,
    mcs_verify,
    optimality_gap_report,
)

ALL = np.ones(6)
BASE = np.zeros(6)


@pytest.fixture(scope="module")
def islanded(two_bus_text):
    """Two buses joined only by an uninstalled candidate"""
    start = two_bus_text.index("[[line0]]")
    end = two_bus_text.index("[[candidate]]")
    return parse_case_text(two_bus_text[:start] + two_bus_text[end:], source="islanded")


class TestAcopf:
    """Test cases for acopf_solve"""

    def test_flat_start_base_case(self, three_bus):
        """Test that the flat start converges on the three-bus base topology"""
        sol = acopf_solve(three_bus, BASE)
        assert sol.converged
        assert sol.starts == 1
        assert sol.violation <= 1e-6
        assert np.all(sol.v >= 0.95 - 1e-6) and np.all(sol.v <= 1.05 + 1e-6)
        assert sol.f[0] == pytest.approx(0.0, abs=1e-12)
        assert np.sum(sol.cp_d) == pytest.approx(0.0, abs=1e-6)

    def test_power_balance(self, three_bus):
        """Test that generation covers load, RES and losses"""
        sol = acopf_solve(three_bus, ALL)
        served = three_bus.p_load.sum() - np.sum(sol.cp_d)
        res = three_bus.p_res.sum() - np.sum(sol.cp_r)
        losses = np.sum(sol.p_from + sol.p_to)
        assert np.sum(sol.p_g) + res == pytest.approx(served + losses, abs=1e-6)
        assert losses >= -1e-9

    def test_plan_model_accepted(self, three_bus):
        """Test a TepPlan and a prebuilt model"""
        plan = TepPlan(case="three_bus", y_m=[0, 0, 0, 0, 1, 0])
        model = acopf_model(three_bus)
        sol = acopf_solve(three_bus, plan, model=model)
        assert sol.converged
        assert sol.p_from.shape == (3,)

    def test_plan_length_checked(self, three_bus):
        """Test that a plan of the wrong length is rejected"""
        with pytest.raises(AssemblyError):
            acopf_solve(three_bus, [1, 0])

    def test_islanded_load_is_curtailed(self, islanded):
        """Test CP_d = P_d + xi_d at a bus without any line"""
        sol = acopf_solve(islanded, [0], np.array([0.0, 0.05, 0.0, 0.0]))
        assert sol.converged
        assert sol.cp_d[1] == pytest.approx(0.55, abs=1e-6)
        assert sol.objective == pytest.approx(islanded.gamma_d * 0.55 + 0.05, rel=1e-6)


class TestSampling:
    """Test cases for draw_samples"""

    def test_reproducible(self, three_bus):
        """Test that a fixed seed reproduces the sample set bit for bit"""
        box = build_uncertainty_box(three_bus, 10.0, 50.0)
        np.testing.assert_array_equal(draw_samples(box, 100, 2021), draw_samples(box, 100, 2021))
        assert not np.array_equal(draw_samples(box, 100, 2021), draw_samples(box, 100, 2022))

    def test_inside_box(self, three_bus):
        """Test that every draw lies in the box"""
        box = build_uncertainty_box(three_bus, 10.0, 50.0)
        assert all(box.contains(xi) for xi in draw_samples(box, 500, 1))

    def test_marginally_uniform(self, three_bus):
        """Test a chi-square statistic of one load component over ten bins"""
        box = build_uncertainty_box(three_bus, 10.0, 0.0)
        xi = draw_samples(box, 2000, 2021)[:, 2]
        counts, _ = np.histogram(xi, bins=10, range=(box.lower[2], box.upper[2]))
        chi2 = float(np.sum((counts - 200.0) ** 2 / 200.0))
        # 99.9% quantile with 9 degrees of freedom
        assert chi2 < 27.88


class TestMcs:
    """Test cases for mcs_verify"""

    def test_no_samples(self, three_bus):
        """Test that zero samples give an empty report with undefined robustness"""
        box = build_uncertainty_box(three_bus, 10.0, 0.0)
        report = mcs_verify(three_bus, ALL, box, n_samples=0)
        assert report.samples == 0
        assert report.robustness is None
        assert not report.robust
        assert report.rows == []

    def test_robust_plan(self, three_bus):
        """Test that every sample of a well-built plan is feasible"""
        box = build_uncertainty_box(three_bus, 10.0, 0.0)
        report = mcs_verify(three_bus, ALL, box, n_samples=10, seed=5)
        assert report.robustness == 1.0
        assert report.robust
        assert [row.index for row in report.rows] == list(range(10))
        assert report.failures == []

    def test_independent_of_sample_count(self, three_bus):
        """Test that the first samples do not depend on how many are drawn"""
        box = build_uncertainty_box(three_bus, 10.0, 0.0)
        short = mcs_verify(three_bus, ALL, box, n_samples=3, seed=9)
        long = mcs_verify(three_bus, ALL, box, n_samples=6, seed=9)
        assert short.rows == long.rows[:3]

    def test_recourse_mode_accepts_curtailment(self, islanded):
        """Test that a converged curtailing dispatch counts as feasible by default"""
        box = build_uncertainty_box(islanded, 10.0, 0.0)
        report = mcs_verify(islanded, [0], box, n_samples=4, seed=1)
        assert report.mode == "recourse"
        assert report.robustness == 1.0
        assert all(row.cp_d > 0.4 for row in report.rows)

    def test_strict_mode_rejects_curtailment(self, islanded):
        """Test that strict mode fails samples that curtail beyond the worst case"""
        box = build_uncertainty_box(islanded, 10.0, 0.0)
        options = McsOptions(samples=4, seed=1, strict=True, worst_curtailment=0.0)
        report = mcs_verify(islanded, [0], box, options=options)
        assert report.mode == "strict"
        assert report.robustness == 0.0
        assert report.failures == [0, 1, 2, 3]

    def test_strict_threshold_is_worst_curtailment(self, islanded):
        """Test that curtailment up to the plan's worst case is tolerated"""
        box = build_uncertainty_box(islanded, 10.0, 0.0)
        options = McsOptions(samples=4, seed=1, strict=True, worst_curtailment=0.55)
        assert mcs_verify(islanded, [0], box, options=options).robustness == 1.0


class TestDominance:
    """Test cases for check_worst_case_dominance and optimality_gap_report"""

    def test_heavy_vertex_dominates(self, three_bus):
        """Test that no sampled realization costs more than the heavy vertex"""
        box = build_uncertainty_box(three_bus, 10.0, 0.0)
        report = check_worst_case_dominance(three_bus, ALL, box, box.heavy_vertex(), n=10)
        assert report.dominated
        assert len(report.sample_costs) == 10
        assert report.max_sample_cost <= report.worst_cost * (1 + 1e-3)

    def test_optimality_gap_record(self, three_bus):
        """Test the fields of a non-convex against relaxed comparison"""
        record = optimality_gap_report(three_bus, BASE, starts=2, name="base")
        assert record.system == "three_bus"
        assert record.topology == "base"
        assert record.starts == 2
        assert record.nonconvex > 0 and record.relaxed > 0
        assert record.relative_gap == pytest.approx(abs(record.nonconvex - record.relaxed) / record.nonconvex)

    @pytest.mark.parametrize("plan", [BASE, ALL], ids=["base", "all"])
    def test_three_bus_optimality_gap(self, three_bus, plan):
        """Test that the relaxation is exact on fixed three-bus topologies"""
        record = optimality_gap_report(three_bus, plan, starts=3)
        assert record.relative_gap <= 1e-3

    @pytest.mark.slow
    def test_garver_optimality_gap(self, garver6):
        """Test that the relaxation is exact on the fully built Garver system"""
        record = optimality_gap_report(garver6, np.ones(len(garver6.candidate_lines)), starts=3)
        assert record.relative_gap <= 1e-3


class TestMcsAcceptance:
    """Test cases for the Monte-Carlo check of solved robust plans"""

    @pytest.fixture(scope="class")
    def robust_plan(self, three_bus):
        box = build_uncertainty_box(three_bus, 10.0, 50.0)
        result = benders_solve(three_bus, box)
        assert result.state.converged
        return result.plan, box

    @pytest.mark.slow
    def test_desk_scale_run(self, three_bus, robust_plan):
        """Test full robustness of the three-bus robust plan on 2,000 samples"""
        plan, box = robust_plan
        report = mcs_verify(three_bus, plan, box, options=McsOptions(samples=2000, seed=2021, workers=4))
        assert report.samples == 2000
        assert report.robustness == 1.0

    @pytest.mark.slow
    @pytest.mark.extended
    def test_full_scale_run(self, three_bus, robust_plan):
        """Test full robustness of the three-bus robust plan on 16,600 samples"""
        plan, box = robust_plan
        report = mcs_verify(three_bus, plan, box, options=McsOptions(samples=16600, seed=2021, workers=4))
        assert report.robustness == 1.0

import pytest
from pydantic import ValidationError

from rtep.core.config import RunConfig, Settings
from rtep.core.exceptions import (
    AssemblyError,
    CaseParseError,
    CaseValidationError,
    ConfigError,
    ConvergenceError,
    LpFailure,
    RtepException,
    SlaveSolveError,
    UncertaintyError,
)
from rtep.models.results import CostBreakdown, McsReport, TepPlan, WorstCaseReport

THREE_BUS_LABELS = ["1-2#1", "1-2#2", "1-3#1", "1-3#2", "2-3#1", "2-3#2"]


class TestTepPlan:
    """Test cases for TepPlan"""

    def test_rounds_solver_output(self):
        """Test that near-binary values round to 0 and 1"""
        plan = TepPlan(y_m=[0.9999996, 1e-7, 1.0])
        assert plan.y_m == [1, 0, 1]
        assert plan.vector.tolist() == [1.0, 0.0, 1.0]

    def test_rejects_fractional_values(self):
        """Test that values that do not round to 0 or 1 are rejected"""
        with pytest.raises(ValidationError):
            TepPlan(y_m=[0, 2])

    def test_label_length(self):
        """Test that labels must match y_m entry for entry"""
        with pytest.raises(ValidationError):
            TepPlan(y_m=[0, 1], labels=["1-2#1"])

    def test_installed_per_corridor(self):
        """Test corridor counts and the one-line description"""
        plan = TepPlan(y_m=[1, 1, 0, 0, 1, 0], labels=THREE_BUS_LABELS)
        assert plan.installed() == {"1-2": 2, "2-3": 1}
        assert plan.describe() == "n_1-2=2, n_2-3=1"
        assert TepPlan(y_m=[0] * 6, labels=THREE_BUS_LABELS).describe() == "none"

    def test_json_round_trip(self):
        """Test that a written plan reads back unchanged"""
        plan = TepPlan(case="three_bus", y_m=[0, 0, 0, 0, 1, 0], labels=THREE_BUS_LABELS, investment_cost=4000.0)
        assert TepPlan.model_validate_json(plan.model_dump_json()) == plan

    def test_check_against_case(self, three_bus):
        """Test the length and installation-order checks"""
        TepPlan(y_m=[1, 0, 0, 0, 1, 1]).check_against(three_bus)
        with pytest.raises(ConfigError):
            TepPlan(y_m=[1, 0]).check_against(three_bus)
        with pytest.raises(ConfigError) as exc_info:
            TepPlan(y_m=[0, 1, 0, 0, 0, 0]).check_against(three_bus)
        assert "before line 1" in exc_info.value.detail


class TestReports:
    """Test cases for the cost and verification reports"""

    def test_cost_breakdown_totals(self):
        """Test the computed operating and total costs"""
        costs = CostBreakdown(investment=10.0, generation=5.0, curtailment_load=2.0, curtailment_res=1.0, constant=0.5)
        assert costs.operating == pytest.approx(8.5)
        assert costs.total == pytest.approx(18.5)
        dumped = costs.model_dump()
        assert dumped["operating"] == pytest.approx(8.5)
        assert dumped["total"] == pytest.approx(18.5)

    def test_mcs_robustness(self):
        """Test the robust flag for full, partial and undefined robustness"""
        assert McsReport(samples=4, seed=1, robustness=1.0).robust
        assert not McsReport(samples=4, seed=1, robustness=0.75).robust
        assert not McsReport(samples=0, seed=1).robust

    def test_mcs_mode(self):
        """Test that only the recourse and strict modes exist"""
        with pytest.raises(ValidationError):
            McsReport(samples=1, seed=1, mode="lenient")

    def test_worst_case_curtailment(self):
        """Test the total curtailment of a worst-case report"""
        report = WorstCaseReport(
            case="three_bus", u_d=10.0, u_r=0.0, xi_d={"1": 0.1}, xi_r={"1": 0.0}, psi=[1.0, 0.0],
            sd=100.0, cp_d={"1": 0.02, "2": 0.01}, cp_r={"1": 0.005},
        )
        assert report.curtailment == pytest.approx(0.035)


class TestRunConfig:
    """Test cases for RunConfig and Settings"""

    def test_defaults(self):
        """Test the defaults of a bare run"""
        config = RunConfig(command="solve-det", case="three_bus")
        assert config.u_d == 0.0 and config.u_r == 0.0
        assert config.init_topology == "all"
        assert config.workers >= 1

    def test_rejects_unknown_fields(self):
        """Test that misspelled options are rejected"""
        with pytest.raises(ValidationError):
            RunConfig(command="solve-det", case="three_bus", samplez=10)

    def test_rejects_unknown_topologies(self):
        """Test the init_topology and topology choices"""
        with pytest.raises(ValidationError):
            RunConfig(command="solve-robust", case="three_bus", init_topology="none")
        with pytest.raises(ValidationError):
            RunConfig(command="dualgap", case="three_bus", topology="half")

    def test_validates_assignment(self):
        """Test that assignment is validated"""
        config = RunConfig(command="solve-robust", case="three_bus")
        with pytest.raises(ValidationError):
            config.u_d = -1.0

    def test_settings_from_environment(self, monkeypatch):
        """Test RTEP_* overrides and the normalized log level"""
        monkeypatch.setenv("RTEP_MCS_SAMPLES", "50")
        monkeypatch.setenv("RTEP_LOG", " debug ")
        local = Settings()
        assert local.mcs_samples == 50
        assert local.log_level == "DEBUG"


class TestExceptions:
    """Test cases for the exception hierarchy"""

    @pytest.mark.parametrize(
        "error, code",
        [
            (CaseParseError("case.toml", "bad table", line=3), 3),
            (CaseValidationError("bus", "duplicate id 2"), 3),
            (UncertaintyError("u_r above 100%"), 2),
            (ConfigError("missing plan"), 2),
            (LpFailure("status 4"), 4),
            (SlaveSolveError("crossed rows"), 4),
            (ConvergenceError(200, 0.1), 5),
            (AssemblyError("nonconvex model"), 1),
        ],
    )
    def test_exit_codes(self, error, code):
        """Test the CLI exit code of each exception"""
        assert isinstance(error, RtepException)
        assert error.exit_code == code

    def test_parse_error_location(self):
        """Test that the location names the file, line and field"""
        error = CaseParseError("case.toml", "expected a number", line=12, field="bus.p_load")
        assert "case.toml:12 [bus.p_load]" in error.detail
        assert error.line == 12

    def test_exit_code_override(self):
        """Test an explicit exit code on the base exception"""
        assert RtepException("stop", exit_code=7).exit_code == 7

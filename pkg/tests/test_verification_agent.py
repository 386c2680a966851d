"""
Tests for report statuses and the verification suites
"""

import math

import pytest

from agents.replica_agent import ReplicaAgent
from agents.verification_agent import (
    Status,
    VerificationAgent,
    apply_bonferroni,
    bonferroni_sigma,
    deterministic_report,
    reports_table,
    statistical_report,
    trend_ok,
)
from engine.kernels import RelocationKernel
from engine.measures import CylinderFunction, EmpiricalMeasure

G_MU0 = 1.0 / (2.0 * math.sqrt(2.0 / math.pi))


@pytest.fixture
def agent():
    return VerificationAgent(ReplicaAgent(seed=11, jobs=1, progress=False))


def test_statistical_statuses():
    """Test PASS, FAIL and UNDERPOWERED"""
    assert statistical_report("a", 1.0, 0.01, 1.02, 200).status is Status.PASS
    assert statistical_report("a", 1.1, 0.01, 1.0, 200).status is Status.FAIL
    assert statistical_report("a", 1.0, 0.01, 1.02, 50).status is Status.UNDERPOWERED
    assert statistical_report("a", 1.1, 0.01, 1.0, 50).status is Status.UNDERPOWERED
    assert statistical_report("a", 1.0, 0.2, 1.0, 500).status is Status.UNDERPOWERED


def test_hard_failure_is_never_underpowered():
    """Test that a hard failure forces FAIL"""
    report = statistical_report("a", 1.0, 0.01, 1.0, 10, failures=["hard: bound violated"])
    assert report.status is Status.FAIL
    soft = statistical_report("a", 1.0, 0.01, 1.0, 10, failures=["trend"])
    assert soft.status is Status.UNDERPOWERED


def test_deterministic_report():
    """Test absolute tolerances"""
    assert deterministic_report("d", 1e-9, 0.0, 1e-8).status is Status.PASS
    failed = deterministic_report("d", 1e-7, 0.0, 1e-8)
    assert failed.status is Status.FAIL
    assert failed.to_dict()["k_sigma"] is None


def test_bonferroni_sigma():
    """Test the family-wise threshold"""
    assert bonferroni_sigma(1) == 3.0
    assert bonferroni_sigma(10) == pytest.approx(3.64, abs=0.01)
    assert bonferroni_sigma(10) < bonferroni_sigma(100)


def test_apply_bonferroni_widens_tolerance():
    """Test rejudging a suite"""
    borderline = statistical_report("a", 1.031, 0.01, 1.0, 200)
    exact = deterministic_report("d", 0.0, 0.0, 1e-12)
    assert borderline.status is Status.FAIL
    k = apply_bonferroni([borderline, exact, statistical_report("b", 1.0, 0.01, 1.0, 200)])
    assert k == pytest.approx(bonferroni_sigma(2))
    assert borderline.status is Status.PASS
    assert exact.status is Status.PASS


def test_trend_ok():
    """Test the non-increasing deviation rule"""
    assert trend_ok([0.3, 0.2, 0.1], [0.01] * 3)
    assert trend_ok([0.1, 0.15, 0.05], [0.05] * 3)
    assert not trend_ok([0.1, 0.3], [0.01, 0.01])
    assert not trend_ok([0.1, 0.11, 0.1, 0.11], [0.05] * 4)


def test_report_serialization_and_table():
    """Test JSON fields and the text table"""
    report = statistical_report("conv", 1.0, 0.01, 1.0, 200)
    report.runtime = 3.5
    data = report.to_dict()
    assert "runtime" not in data
    assert data["status"] == "PASS"
    assert data["pass"] is True
    table = reports_table([report])
    assert "conv" in table and "PASS" in table
    assert reports_table([]) == "(无检验)"


def test_identity_suite_passes(agent, basis):
    """Test the deterministic identity checks on the interval"""
    reports = agent.identity_suite(basis)
    names = {r.name for r in reports}
    assert {"half_laplacian_reconstruction", "delta_Af_identity", "flow_property",
            "generator_split", "discrete_generator_fd"} <= names
    for report in reports:
        assert report.status is Status.PASS, report.to_dict()


def test_prop45a_constant_function(agent, mu0_law):
    """Test that f ≡ 1 gives K on every replica"""
    report = agent.prop45a(mu0_law, CylinderFunction.constant_one(), 5, 10, 1e-3)
    assert report.lhs == pytest.approx(0.5, abs=1e-12)
    assert report.rhs == pytest.approx(0.5, abs=1e-12)
    assert report.stderr == pytest.approx(0.0, abs=1e-12)
    assert report.status is Status.UNDERPOWERED


def test_prop45bc_jump_bound(agent, mu0_law):
    """Test the coupled estimator and its per-jump Lipschitz bound"""
    kernel = RelocationKernel.fixed_h1(mu0_law.basis)
    f = CylinderFunction.mode_pairing(1)
    report_b, report_c = agent.prop45bc(mu0_law, f, 5, 20, 1e-3, kernel)
    assert report_b.details["jump_bound_violations"] == 0
    assert report_b.rhs == pytest.approx(0.5 * G_MU0, abs=1e-12)
    assert report_c.rhs == pytest.approx(-0.5 * G_MU0, abs=1e-12)
    total = agent.prop45bc_sum_check(report_b)
    assert total.name == "prop45bc_sum[h_1]"
    assert total.rhs == pytest.approx(0.0, abs=1e-12)


def test_prop45a_cutoff_diagnostic_is_not_judged(agent, mu0_law):
    """Test that the cutoff diagnostic always reports"""
    report = agent.prop45a_cutoff_diagnostic(mu0_law, [3, 6], 5, 1e-3)
    assert report.status is Status.PASS
    assert [row["n"] for row in report.details["per_n"]] == [3, 6]


def test_convergence_experiment_underpowered(agent, mu0_law):
    """Test per-mode convergence reports with few replicas"""
    kernel = RelocationKernel.fixed_h1(mu0_law.basis)
    reports = agent.convergence_experiment(mu0_law, 0.1, [5, 10], 10, 1e-2, kernel, modes=(1, 2))
    assert [r.name for r in reports] == ["convergence[h_1]", "convergence[h_2]"]
    assert all(r.status is Status.UNDERPOWERED for r in reports)
    assert reports[0].rhs == pytest.approx(G_MU0, abs=1e-12)
    with pytest.raises(ValueError):
        agent.convergence_experiment(mu0_law, 0.1, [10, 10], 10, 1e-2, kernel)


def test_relocation_mean_check(agent, mu0_law, interval):
    """Test the boundary mean property for two kernels"""
    y = EmpiricalMeasure(interval, [[0.0], [0.8], [1.7], [2.6]], [True, False, False, False])
    f = CylinderFunction.mode_pairing(1)
    for kernel in (RelocationKernel.uniform_survivor(interval), RelocationKernel.fixed_h1(mu0_law.basis)):
        report = agent.relocation_mean_check(mu0_law, f, kernel, y, 0, 400).rejudge(4.0)
        assert report.status is Status.PASS, report.to_dict()
    with pytest.raises(ValueError):
        agent.relocation_mean_check(mu0_law, f, RelocationKernel.uniform_survivor(interval), y, 1, 400)


def test_mosco_targets(agent, mu0_law):
    """Test the semigroup and resolvent targets reported by the operational check"""
    kernel = RelocationKernel.fixed_h1(mu0_law.basis)
    report = agent.mosco_operational_check(mu0_law, CylinderFunction.mode_pairing(1),
                                           CylinderFunction.constant_one(), 0.1, 4.0, [3, 6], 4, 1e-2, kernel)
    assert report.rhs == pytest.approx(G_MU0, abs=1e-12)
    assert report.details["resolvent_target"] == pytest.approx(G_MU0 * (1.0 - math.exp(-12.0)), rel=1e-8)
    assert [row["n"] for row in report.details["semigroup"]] == [3, 6]
    assert report.status is not Status.PASS


def test_calibration_suite(agent, basis):
    """Test killed Brownian motion against the exit and survival series"""
    reports = agent.calibration_suite(basis, paths=4000, dt=1e-2)
    assert len(reports) == 5
    for report in reports:
        report.rejudge(4.0)
        assert report.status is Status.PASS, report.to_dict()
    assert reports[0].rhs == pytest.approx(0.75)

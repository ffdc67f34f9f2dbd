import math

import pytest

from active_steering.harness.models import RunConfig
from active_steering.harness.verify_service import KRAUS_STEPS, ORACLE_CASES, CheckResult, VerifyReport, VerifyService
from steering_core.model import supercurrent_axis

CHECKS = (
    "check_kraus_completeness", "check_axis_unitarity", "check_probabilities", "check_oracle",
    "check_bloch_crosscheck", "check_trace_and_positivity", "check_walker_norms",
    "check_stream_independence", "check_greedy_beats_random",
)


@pytest.fixture
def service():
    return VerifyService()


class TestChecks:

    def test_operator_checks_pass(self, service):
        config = RunConfig()
        for check in (service.check_kraus_completeness(config), service.check_axis_unitarity(),
                      service.check_probabilities(config)):
            assert check.passed, check

    def test_corrupted_axis_is_caught(self):
        service = VerifyService(axis_factory=lambda spec: 1.01 * supercurrent_axis(spec))
        check = service.check_axis_unitarity()
        assert not check.passed
        assert check.residual > 0.01

    def test_dynamics_checks_pass(self, service):
        config = RunConfig()
        results = [service.check_bloch_crosscheck(), service.check_walker_norms(config),
                   service.check_stream_independence(), *service.check_trace_and_positivity(config)]
        for check in results:
            assert check.passed, check

    def test_kraus_exponent_is_fitted_on_fixed_steps(self, service):
        check = service.check_kraus_completeness(RunConfig(dt=0.03))
        assert check.passed, check
        assert KRAUS_STEPS == (1e-2, 1e-3, 1e-4)
        assert float(check.detail.split()[-1]) == pytest.approx(2.0, abs=0.1)

    def test_inflated_step_fails_completeness(self, service):
        check = service.check_kraus_completeness(RunConfig(dt=1.0))
        assert not check.passed
        assert check.residual > 0.05

    def test_euler_trace_is_checked(self, service):
        names = [check.name for check in service.check_trace_and_positivity(RunConfig(), n_steps=2000)]
        assert names == ["trace_preservation", "trace_preservation_euler", "positivity"]

    def test_oracle_covers_strong_damping(self):
        assert (0.03, 3.0) in ORACLE_CASES
        assert (0.03, 10.0) in ORACLE_CASES

    @pytest.mark.slow
    def test_walker_average_matches_direct_integration_at_strong_damping(self, service):
        check = service.check_oracle(RunConfig(), walker_counts=(100, 400, 1600), n_seeds=2, n_steps=100,
                                     cases=((0.03, 10.0),))
        assert check.passed, check

    @pytest.mark.slow
    def test_walker_average_converges_to_direct_integration(self, service):
        check = service.check_oracle(RunConfig())
        assert check.passed, check

    @pytest.mark.slow
    def test_greedy_beats_random(self, service):
        check = service.check_greedy_beats_random(RunConfig())
        assert check.passed, check

    @pytest.mark.slow
    async def test_determinism_across_workers(self, service, tmp_path):
        check = await service.check_determinism(RunConfig(output_dir=str(tmp_path)))
        assert check.passed


class TestRun:

    async def test_report_collects_every_check(self, service, monkeypatch):
        for name in CHECKS:
            monkeypatch.setattr(service, name, lambda *args, _n=name: CheckResult(_n, True, 0.0, "ok"))

        async def determinism(config):
            return CheckResult("determinism", True, 0.0, "ok")

        monkeypatch.setattr(service, "check_determinism", determinism)
        report = await service.run(RunConfig())
        assert report.passed
        assert len(report.checks) == 10
        assert "10/10 passed" in report.format()

    async def test_crashing_suite_fails_the_report(self, service, monkeypatch):
        for name in CHECKS:
            monkeypatch.setattr(service, name, lambda *args, _n=name: CheckResult(_n, True, 0.0, "ok"))

        async def broken(config):
            raise RuntimeError("pool died")

        monkeypatch.setattr(service, "check_determinism", broken)
        report = await service.run(RunConfig())
        assert not report.passed
        failed = [c for c in report.checks if not c.passed]
        assert [c.name for c in failed] == ["determinism"]
        assert math.isnan(failed[0].residual)
        assert "FAIL" in report.format()

    def test_empty_report_passes(self):
        assert VerifyReport().passed

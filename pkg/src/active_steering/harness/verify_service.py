# Verify Service
"""
Fast invariant and oracle suites.

Each check returns its measured residual next to the bound it must meet, so
the report shows how close a passing run is to failing.
"""

import asyncio
import logging
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np
from scipy import stats

from active_steering.harness.models import RunConfig
from active_steering.harness.output import sweep_frame, write_csv
from active_steering.harness.sweep_service import SweepService
from steering_core import linalg
from steering_core.core_config import REFERENCE_PARAMETERS
from steering_core.diagnostics import window_summary
from steering_core.dynamics import (
    RngPolicy,
    StepInputs,
    evolve_trajectory,
    replay_ensemble,
    sme_integrate,
    sse_step,
)
from steering_core.linalg import Operator
from steering_core.model import (
    ModelSpec,
    Outcome,
    build_operators,
    kraus_completeness_residual,
    outcome_probabilities,
    steering_set,
    supercurrent_axis,
)
from steering_core.steering import bloch_vs_sme_crosscheck, build_protocol

logger = logging.getLogger(__name__)

AxisFactory = Callable[[ModelSpec], Operator]

KRAUS_STEPS = (1e-2, 1e-3, 1e-4)

# (dt, gamma) of the walker-ensemble oracle cases; both rates set to gamma
ORACLE_CASES = ((0.01, 0.5), (0.03, 3.0), (0.03, 10.0))


# ============================================================================
# Data Models
# ============================================================================

@dataclass
class CheckResult:
    """Outcome of one verification check."""
    name: str
    passed: bool
    residual: float
    bound: str
    detail: str = ""


@dataclass
class VerifyReport:
    """All checks of one verification pass."""
    checks: List[CheckResult] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def format(self) -> str:
        lines = [f"{'check':<28} {'status':<6} {'residual':>12}  bound"]
        for check in self.checks:
            status = "PASS" if check.passed else "FAIL"
            lines.append(f"{check.name:<28} {status:<6} {check.residual:>12.4g}  {check.bound}"
                         + (f"  ({check.detail})" if check.detail else ""))
        lines.append(f"{sum(c.passed for c in self.checks)}/{len(self.checks)} passed in {self.wall_time:.1f}s")
        return "\n".join(lines)


def _random_density(rng: np.random.Generator, dim: int) -> Operator:
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = m @ m.conj().T
    return rho / np.trace(rho).real


def _click_sequence(spec: ModelSpec, n_steps: int, rng: np.random.Generator) -> List[Outcome]:
    # One-qubit click probability is state independent
    p_click = (spec.coupling * spec.dt) ** 2
    return [Outcome(int(u < p_click)) for u in rng.random(n_steps)]


# ============================================================================
# Verify Service
# ============================================================================

class VerifyService:
    """
    Service class for the property suites.

    Usage:
        service = VerifyService()
        report = await service.run(config)

    Args:
        axis_factory: Builds sigma_s from a ModelSpec; replaceable to inject a
            corrupted axis as a negative control
    """

    def __init__(self, axis_factory: Optional[AxisFactory] = None, seed: int = 2024):
        self.axis_factory = axis_factory or supercurrent_axis
        self.seed = seed
        logger.info("VerifyService initialized")

    def _base_spec(self, config: RunConfig, **updates) -> ModelSpec:
        return config.model_spec(gamma=0.0).model_copy(update=updates)

    # ------------------------------------------------------------------------
    # Operator checks
    # ------------------------------------------------------------------------

    def check_kraus_completeness(self, config: RunConfig) -> CheckResult:
        """Residual scales as dt^2 over KRAUS_STEPS and stays small at the configured dt."""
        spec = self._base_spec(config)

        def worst(dt: float) -> float:
            scaled = spec.model_copy(update={"dt": dt})
            return max(kraus_completeness_residual(scaled, c) for c in steering_set(spec.n_qubits))

        residuals = [worst(dt) for dt in KRAUS_STEPS]
        exponent = float(np.polyfit(np.log(KRAUS_STEPS), np.log(residuals), 1)[0])
        at_config = worst(spec.dt)
        passed = abs(exponent - 2.0) <= 0.1 and at_config <= 0.05
        return CheckResult("kraus_completeness", passed, at_config, "<= 0.05, exponent 2 +- 0.1",
                           f"exponent {exponent:.3f}")

    def check_axis_unitarity(self, n_samples: int = 100) -> CheckResult:
        """(sigma_s)^2 = 1 over random transmissions and phases."""
        rng = np.random.default_rng(self.seed)
        worst = 0.0
        for _ in range(n_samples):
            spec = ModelSpec(transmission=rng.uniform(0.01, 1.0), phase=rng.uniform(0.0, 2 * math.pi))
            axis = self.axis_factory(spec)
            worst = max(worst, float(np.max(np.abs(axis @ axis - linalg.IDENTITY_2))))
        return CheckResult("axis_unitarity", worst <= 1e-12, worst, "<= 1e-12")

    def check_probabilities(self, config: RunConfig, n_samples: int = 50) -> CheckResult:
        rng = np.random.default_rng(self.seed)
        worst = 0.0
        for n_qubits in (1, 2):
            spec = self._base_spec(config, n_qubits=n_qubits)
            for _ in range(n_samples):
                table = outcome_probabilities(_random_density(rng, spec.dim), spec)
                worst = max(worst, abs(sum(table.values()) - 1.0))
        return CheckResult("probability_normalization", worst <= 1e-10, worst, "<= 1e-10")

    # ------------------------------------------------------------------------
    # Dynamics checks
    # ------------------------------------------------------------------------

    def check_oracle(self, config: RunConfig, walker_counts=(10, 100, 1000), n_seeds: int = 3,
                     n_steps: int = 200, cases=ORACLE_CASES) -> CheckResult:
        """Walker averages converge to the direct integration as n_w^(-1/2), weak to strong damping."""
        protocol = build_protocol("n1-target-zero")
        deviations = np.zeros((len(cases), n_seeds, len(walker_counts)))
        within_bound = True
        for i, (dt, gamma) in enumerate(cases):
            spec = self._base_spec(config, n_qubits=1, coupling=REFERENCE_PARAMETERS["coupling"], dt=dt,
                                   gamma_ad=gamma, gamma_pd=gamma)
            for seed in range(n_seeds):
                policy = RngPolicy(self.seed + seed)
                outcomes = _click_sequence(spec, n_steps, policy.stream("outcome", point_index=i))
                outcomes[n_steps // 2] = Outcome(1)
                oracle = sme_integrate(spec, protocol, outcomes)
                for j, n_walkers in enumerate(walker_counts):
                    states = replay_ensemble(spec, protocol.initial_state, outcomes, oracle.choices, n_walkers,
                                             policy.stream("bath", point_index=i, trajectory_index=j))
                    gap = float(np.max(np.linalg.norm(states - oracle.states, axis=(1, 2))))
                    deviations[i, seed, j] = gap
                    within_bound &= gap <= 5 / math.sqrt(n_walkers)
        mean_gap = deviations.mean(axis=(0, 1))
        slope = float(np.polyfit(np.log(walker_counts), np.log(mean_gap), 1)[0])
        passed = within_bound and abs(slope + 0.5) <= 0.15
        worst_case = cases[int(np.argmax(deviations[:, :, -1].mean(axis=1)))]
        return CheckResult("sse_sme_oracle", passed, float(mean_gap[-1]), "<= 5/sqrt(n_w), slope -0.5 +- 0.15",
                           f"slope {slope:.3f}, worst dt={worst_case[0]} gamma={worst_case[1]}")

    def check_bloch_crosscheck(self, n_cases: int = 5) -> CheckResult:
        rng = np.random.default_rng(self.seed)
        worst = 0.0
        for case in range(n_cases):
            rates = (0.0, 0.0) if case == 0 else tuple(rng.uniform(0.0, 1.0, size=2))
            spec = ModelSpec(dt=1e-3, gamma_ad=rates[0], gamma_pd=rates[1])
            worst = max(worst, bloch_vs_sme_crosscheck(spec, n_steps=100, jump_every=10))
        return CheckResult("bloch_crosscheck", worst <= 1e-10, worst, "<= 1e-10")

    def check_trace_and_positivity(self, config: RunConfig, n_steps: int = 10_000) -> List[CheckResult]:
        spec = self._base_spec(config, n_qubits=1, coupling=REFERENCE_PARAMETERS["coupling"], dt=0.01, gamma_ad=0.1, gamma_pd=0.1)
        outcomes = _click_sequence(spec, n_steps, np.random.default_rng(self.seed))
        states = sme_integrate(spec, build_protocol("n1-target-zero"), outcomes).states
        drift = float(np.max(np.abs(np.trace(states, axis1=1, axis2=2) - 1.0)))
        smallest = float(min(np.linalg.eigvalsh(rho)[0] for rho in states[::10]))
        # euler adds the literal increment with no renormalization
        literal = spec.model_copy(update={"dt": 1e-3, "gamma_ad": 0.5, "gamma_pd": 0.5})
        literal_states = sme_integrate(literal, build_protocol("n1-target-zero"),
                                       _click_sequence(literal, n_steps, np.random.default_rng(self.seed)),
                                       scheme="euler").states
        literal_drift = float(np.max(np.abs(np.trace(literal_states, axis1=1, axis2=2) - 1.0)))
        return [
            CheckResult("trace_preservation", drift <= 1e-8, drift, "<= 1e-8 over 1e4 steps"),
            CheckResult("trace_preservation_euler", literal_drift <= 1e-8, literal_drift,
                        "<= 1e-8 over 1e4 steps"),
            CheckResult("positivity", smallest >= -1e-9, smallest, ">= -1e-9"),
        ]

    def check_walker_norms(self, config: RunConfig, n_walkers: int = 50, n_steps: int = 300) -> CheckResult:
        spec = self._base_spec(config, n_qubits=2, coupling=REFERENCE_PARAMETERS["coupling_two_qubit"], gamma_ad=0.3, gamma_pd=0.3)
        ops = build_operators(spec)
        streams = RngPolicy(self.seed).trajectory_streams()
        walkers = np.tile(build_protocol("n2-bell-0+").initial_state, (n_walkers, 1))
        worst = 0.0
        for step in range(n_steps):
            index = int(streams.policy.integers(len(ops.choices)))
            inputs = StepInputs(h0=ops.hamiltonians[index], c_meas=ops.jumps[1 if step % 2 else -1],
                                c_errors=ops.error_jumps, xi=0,
                                bath_draws=streams.bath.standard_normal((n_walkers, ops.n_channels)))
            walkers = sse_step(walkers, inputs, spec.dt)
            worst = max(worst, float(np.max(np.abs(np.linalg.norm(walkers, axis=1) - 1.0))))
        return CheckResult("walker_norms", worst <= 1e-10, worst, "<= 1e-10")

    def check_stream_independence(self, n_draws: int = 100_000) -> CheckResult:
        policy = RngPolicy(self.seed)
        uniforms = policy.stream("outcome").random(n_draws)
        normals = policy.stream("bath").standard_normal(n_draws)
        correlation = abs(float(np.corrcoef(uniforms, normals)[0, 1]))
        bound = 3 / math.sqrt(n_draws)
        return CheckResult("stream_independence", correlation <= bound, correlation, f"<= {bound:.4g}")

    async def check_determinism(self, config: RunConfig) -> CheckResult:
        """Sweep files are byte-identical for one and two workers."""
        small = config.model_copy(update={
            "gamma_min": 0.01, "gamma_max": 1.0, "gamma_count": 5, "n_trajectories": 3,
            "n_walkers": 4, "n_steps": 40, "snapshot_stride": 5,
        })
        service = SweepService()
        contents = []
        with tempfile.TemporaryDirectory() as tmp:
            for workers in (1, 2):
                result = await service.run_sweep(small.model_copy(update={"workers": workers}))
                path = write_csv(sweep_frame(result.points), Path(tmp) / f"sweep_{workers}.csv", result.config_hash)
                contents.append(path.read_bytes())
        identical = contents[0] == contents[1]
        return CheckResult("determinism", identical, 0.0 if identical else 1.0, "identical for 1 and 2 workers")

    def check_greedy_beats_random(self, config: RunConfig, n_trajectories: int = 100,
                                  n_steps: int = 300) -> CheckResult:
        spec = self._base_spec(config, n_qubits=1, coupling=REFERENCE_PARAMETERS["coupling"])
        protocol = build_protocol("n1-target-zero")
        policy = RngPolicy(self.seed)
        late = {"greedy": [], "random": []}
        for name, offset in (("greedy", 0), ("random", 1)):
            for t in range(n_trajectories):
                record = evolve_trajectory(spec, protocol, n_steps, policy.trajectory_streams(offset, t),
                                           n_walkers=1, policy=name)
                late[name].append(window_summary(record, config.window_fraction).mean_fidelity)
        p_value = float(stats.mannwhitneyu(late["greedy"], late["random"], alternative="greater").pvalue)
        return CheckResult("greedy_beats_random", p_value < 0.01, p_value, "p < 0.01",
                           f"greedy {np.mean(late['greedy']):.3f} vs random {np.mean(late['random']):.3f}")

    # ------------------------------------------------------------------------
    # Entry point
    # ------------------------------------------------------------------------

    async def run(self, config: RunConfig) -> VerifyReport:
        """Run every suite; a crashing check counts as a failure."""
        logger.info("🚀 Running verification suites...")
        start = time.perf_counter()
        report = VerifyReport()
        suites = {
            "kraus_completeness": lambda: self.check_kraus_completeness(config),
            "axis_unitarity": self.check_axis_unitarity,
            "probability_normalization": lambda: self.check_probabilities(config),
            "sse_sme_oracle": lambda: self.check_oracle(config),
            "bloch_crosscheck": self.check_bloch_crosscheck,
            "trace_and_positivity": lambda: self.check_trace_and_positivity(config),
            "walker_norms": lambda: self.check_walker_norms(config),
            "stream_independence": self.check_stream_independence,
            "determinism": lambda: self.check_determinism(config),
            "greedy_beats_random": lambda: self.check_greedy_beats_random(config),
        }
        for name, suite in suites.items():
            try:
                outcome = suite()
                if asyncio.iscoroutine(outcome):
                    outcome = await outcome
            except Exception as e:
                logger.exception(f"❌ Verification suite {name} crashed")
                outcome = CheckResult(name, False, math.nan, "no exception", f"{type(e).__name__}: {e}")
            for check in outcome if isinstance(outcome, list) else [outcome]:
                logger.info(f"{'✅' if check.passed else '❌'} {check.name}: residual {check.residual:.4g}")
                report.checks.append(check)
        report.wall_time = time.perf_counter() - start
        return report


# Singleton instance
verify_service = VerifyService()

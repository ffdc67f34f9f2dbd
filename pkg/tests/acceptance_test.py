"""Long reproduction runs of the shipped configurations (--run-acceptance)."""

import os
from pathlib import Path

import pandas as pd
import pytest

import active_steering
from active_steering.harness.ensemble_service import EnsembleService
from active_steering.harness.models import load_run_config
from active_steering.harness.sweep_service import SweepService
from active_steering.harness.trajectory_service import TrajectoryJob, simulate_trajectory
from active_steering.sweep_flow import SweepFlow
from steering_core.diagnostics import rabi_frequency
from steering_core.model import andreev_energy

pytestmark = pytest.mark.acceptance

CONFIG_DIR = Path(active_steering.__file__).parent / "config"
WORKERS = int(os.environ.get("STEERING_WORKERS", os.cpu_count() or 1))


def shipped(name: str, tmp_path, **overrides):
    # Smoke-scale ensembles; the shipped files carry publication sizes
    overrides = {"n_trajectories": 50, "n_walkers": 20, "gamma_count": 9, "workers": WORKERS,
                 "output_dir": str(tmp_path), **overrides}
    return load_run_config(str(CONFIG_DIR / name), overrides)


async def single_rate(config, gamma: float):
    return await SweepService().run_point(config, gamma)


class TestOneQubit:

    async def test_weak_damping_fidelity(self, tmp_path):
        point = await single_rate(shipped("n1_sweep_both.json", tmp_path, n_trajectories=50), 1e-3)
        assert point.mean_fidelity >= 0.90

    async def test_threshold_and_purity_dip(self, tmp_path):
        state = await SweepFlow(shipped("n1_sweep_purity.json", tmp_path)).kickoff()
        assert state.gamma_c is not None, state.threshold_note
        assert 0.05 <= state.gamma_c <= 0.3
        assert min(p.purity for p in state.primary.points) <= 0.60

    async def test_strong_damping_dark_state(self, tmp_path):
        point = await single_rate(shipped("n1_sweep_purity.json", tmp_path), 10.0)
        assert point.purity >= 0.85
        assert point.mean_fidelity <= 0.5

    async def test_scaling_collapse(self, tmp_path):
        state = await SweepFlow(shipped("n1_scaling_collapse.json", tmp_path)).kickoff()
        assert state.max_z_score is not None
        assert state.max_z_score <= 2.0


class TestTwoQubits:

    async def test_threshold(self, tmp_path):
        state = await SweepFlow(shipped("n2_sweep_both.json", tmp_path)).kickoff()
        assert state.gamma_c is not None, state.threshold_note
        assert 0.05 <= state.gamma_c <= 0.4
        points = state.primary.points
        assert min(p.purity for p in points) <= 0.45
        assert points[0].mean_fidelity >= 0.90

    @pytest.mark.parametrize("gamma", [1.0, 3.0, 10.0])
    async def test_phase_noise_plateau(self, tmp_path, gamma):
        point = await single_rate(shipped("n2_sweep_phase.json", tmp_path), gamma)
        assert point.purity == pytest.approx(0.25, abs=0.07)
        assert point.mean_fidelity == pytest.approx(0.25, abs=0.07)

    def test_rabi_frequency_is_twice_the_andreev_energy(self, tmp_path):
        config = shipped("n2_rabi_precession.json", tmp_path)
        spec = config.model_spec()
        record = simulate_trajectory(TrajectoryJob.from_config(config, spec))
        omega = rabi_frequency(record.fidelity[len(record.fidelity) // 4:], spec.dt)
        assert omega == pytest.approx(2 * andreev_energy(spec), rel=0.10)


class TestBlochBall:

    async def test_weak_damping_stays_pure_and_reaches_target(self, tmp_path):
        result = await EnsembleService().run_ensemble(shipped("n1_bloch_weak.json", tmp_path))
        assert result.summary.final_fidelity >= 0.90
        assert result.summary.final_purity >= 0.80

    async def test_strong_damping_crosses_the_ball(self, tmp_path):
        result = await EnsembleService().run_ensemble(shipped("n1_bloch_strong.json", tmp_path))
        frame = pd.read_csv(result.files["ensemble"], comment="#")
        assert frame["purity"].min() <= 0.75

    async def test_strong_dephasing_mixes_the_state(self, tmp_path):
        result = await EnsembleService().run_ensemble(shipped("n1_bloch_dephasing.json", tmp_path))
        assert result.summary.final_purity <= 0.75

import json
import math

import numpy as np
import pytest

from active_steering.harness.models import RunConfig
from active_steering.harness.output import HASH_PREFIX, read_sweep_csv
from active_steering.harness.sweep_service import SweepResult, SweepService
from active_steering.sweep_flow import COLLAPSE_Z_LIMIT, SweepFlow, reanalyse
from steering_core.diagnostics import SweepPoint, ThresholdError

GRID = np.logspace(-3, 1, 17)


class ParabolaSweepService(SweepService):
    """Returns a purity dip at rate 0.1 without simulating."""

    async def run_sweep(self, config, dt=None):
        purities = 0.5 + 0.1 * (np.log10(GRID) + 1) ** 2
        points = [SweepPoint(float(g), 0.9, 0.01, 0.1, float(p), 100) for g, p in zip(GRID, purities)]
        return SweepResult(points=points, dt=dt, config_hash="x", master_seed=config.master_seed,
                           code_version="test", wall_time=0.0)


def small_config(tmp_path, **updates) -> RunConfig:
    values = {
        "gamma_min": 0.01,
        "gamma_max": 1.0,
        "gamma_count": 5,
        "n_trajectories": 2,
        "n_walkers": 3,
        "n_steps": 20,
        "snapshot_stride": 5,
        "output_dir": str(tmp_path / "sweep"),
    }
    values.update(updates)
    return RunConfig(**values)


class TestSweepFlow:

    async def test_export(self, tmp_path):
        config = small_config(tmp_path)
        state = await SweepFlow(config).kickoff()
        out = tmp_path / "sweep"
        assert {"sweep.csv", "sweep.json", "provenance.json"} <= {p.name for p in out.iterdir()}
        csv_text = (out / "sweep.csv").read_text()
        assert csv_text.startswith(f"{HASH_PREFIX}{state.config_hash}")
        assert "wall" not in csv_text
        summary = json.loads((out / "sweep.json").read_text())
        assert summary["config_hash"] == state.config_hash
        assert len(summary["points"]) == 5
        assert "wall_time_s" in json.loads((out / "provenance.json").read_text())
        assert (state.gamma_c is None) != (state.threshold_note is None)
        assert not state.partial

    async def test_threshold_and_collapse(self, tmp_path):
        config = small_config(tmp_path, dt_values=[0.01, 0.03])
        state = await SweepFlow(config, service=ParabolaSweepService()).kickoff()
        assert state.gamma_c == pytest.approx(0.1, rel=1e-9)
        assert state.max_z_score == 0.0
        scaling = json.loads((tmp_path / "sweep" / "scaling.json").read_text())
        assert scaling["collapsed"] is True
        assert (tmp_path / "sweep" / "sweep_dt0.01.csv").exists()
        primary = json.loads((tmp_path / "sweep" / "sweep_dt0.03.json").read_text())
        assert primary["gamma_c"] == pytest.approx(0.1, rel=1e-9)

    async def test_reanalysis_of_exported_sweep(self, tmp_path):
        config = small_config(tmp_path, threshold_method="minimum")
        await SweepFlow(config, service=ParabolaSweepService()).kickoff()
        points, _ = read_sweep_csv(tmp_path / "sweep" / "sweep.csv")
        assert reanalyse(points, "minimum") == pytest.approx(0.1, rel=1e-9)
        with pytest.raises(ThresholdError):
            reanalyse(points[:8], "minimum")

    async def test_unlocated_threshold_is_recorded(self, tmp_path):
        class FlatService(ParabolaSweepService):
            async def run_sweep(self, config, dt=None):
                result = await super().run_sweep(config, dt)
                for point in result.points:
                    point.purity = 1.0 - point.gamma / 20
                return result

        state = await SweepFlow(small_config(tmp_path), service=FlatService()).kickoff()
        assert state.gamma_c is None
        assert "boundary" in state.threshold_note
        summary = json.loads((tmp_path / "sweep" / "sweep.json").read_text())
        assert summary["gamma_c"] is None
        assert not math.isnan(summary["points"][0]["purity"])

    @pytest.mark.parametrize("shift,collapsed", [(0.02, True), (0.03, False)])
    async def test_collapse_limit(self, tmp_path, shift, collapsed):
        class ShiftedService(ParabolaSweepService):
            async def run_sweep(self, config, dt=None):
                result = await super().run_sweep(config, dt)
                if dt == 0.01:
                    for point in result.points:
                        point.mean_fidelity -= shift
                return result

        config = small_config(tmp_path, dt_values=[0.01, 0.03])
        state = await SweepFlow(config, service=ShiftedService()).kickoff()
        assert COLLAPSE_Z_LIMIT == 2.0
        assert state.max_z_score == pytest.approx(shift / math.sqrt(2e-4), rel=1e-6)
        scaling = json.loads((tmp_path / "sweep" / "scaling.json").read_text())
        assert scaling["collapsed"] is collapsed

    async def test_steering_strength_sweep(self, tmp_path):
        seen = []

        class RecordingService(ParabolaSweepService):
            async def run_sweep(self, config, dt=None):
                seen.append((config.steer_strength, dt))
                return await super().run_sweep(config, dt)

        config = small_config(tmp_path, j_values=[1.0, 3.0], dt=0.02)
        state = await SweepFlow(config, service=RecordingService()).kickoff()
        assert seen == [(1.0, 0.02), (3.0, 0.02)]
        assert state.sweep_axis == "steer_strength"
        assert state.primary is state.results[3.0]
        assert state.max_z_score is None
        for j in (1, 3):
            summary = json.loads((tmp_path / "sweep" / f"sweep_J{j}.json").read_text())
            assert summary["steer_strength"] == float(j)
            assert summary["gamma_c"] == pytest.approx(0.1, rel=1e-9)
        assert not (tmp_path / "sweep" / "scaling.json").exists()

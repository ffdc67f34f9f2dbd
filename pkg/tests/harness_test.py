import json
import math

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from active_steering.harness import sweep_service as sweep_module
from active_steering.harness.ensemble_service import EnsembleService
from active_steering.harness.models import WORKERS_ENV, RunConfig, load_run_config
from active_steering.harness.output import (
    HASH_PREFIX,
    check_config_hash,
    config_hash,
    read_config_hash,
    read_sweep_csv,
    ensemble_frame,
    sweep_frame,
    trajectory_frame,
    write_csv,
    write_json,
)
from active_steering.harness.sweep_service import SweepService
from active_steering.harness.trajectory_service import TrajectoryService, simulate_trajectory, TrajectoryJob
from steering_core.diagnostics import SweepPoint
from steering_core.model import andreev_energy
from steering_core.steering import build_protocol


def small_config(tmp_path, **updates) -> RunConfig:
    values = {
        "gamma_min": 0.01,
        "gamma_max": 1.0,
        "gamma_count": 5,
        "n_trajectories": 2,
        "n_walkers": 3,
        "n_steps": 20,
        "snapshot_stride": 5,
        "output_dir": str(tmp_path / "out"),
    }
    values.update(updates)
    return RunConfig(**values)


class TestRunConfig:

    def test_defaults(self):
        config = RunConfig()
        assert config.n_qubits == 1
        assert config.resolved_coupling == 0.98
        assert len(config.gamma_grid()) == 17
        assert RunConfig(protocol="n2-bell-0+").resolved_coupling == 0.49

    def test_validation(self):
        with pytest.raises(ValidationError):
            RunConfig(protocol="n1-target-two")
        with pytest.raises(ValidationError):
            RunConfig(gamma_min=1.0, gamma_max=0.5)
        with pytest.raises(ValidationError):
            RunConfig(unknown_key=1)
        with pytest.raises(ValidationError):
            RunConfig(dt_values=[0.01])
        with pytest.raises(ValidationError):
            RunConfig(gamma_count=3)

    @pytest.mark.parametrize("noise,rates", [("both", (0.2, 0.2)), ("phase", (0.0, 0.2)), ("amplitude", (0.2, 0.0))])
    def test_noise_modes(self, noise, rates):
        spec = RunConfig(noise=noise).model_spec(gamma=0.2)
        assert (spec.gamma_ad, spec.gamma_pd) == rates

    def test_single_run_rates(self):
        assert RunConfig(gamma_ad=0.1, gamma_pd=0.3).model_spec().gamma_pd == 0.3
        assert RunConfig(gamma=0.5, noise="phase").model_spec().gamma_pd == 0.5
        assert RunConfig().model_spec(dt=0.01).dt == 0.01
        assert RunConfig().model_spec(steer_strength=6.0).steer_strength == 6.0

    def test_steering_set(self):
        config = RunConfig(steering_set=[[0], [4]])
        assert config.choices == ((0,), (4,))
        assert RunConfig().choices is None
        for bad in ([[0, 0]], [[7]], []):
            with pytest.raises(ValidationError):
                RunConfig(steering_set=bad)
        assert RunConfig(protocol="n2-bell-0+", steering_set=[[0, 0]]).choices == ((0, 0),)

    def test_swept_axes(self):
        assert RunConfig(j_values=[1.0, 3.0]).j_values == [1.0, 3.0]
        with pytest.raises(ValidationError):
            RunConfig(j_values=[3.0])
        with pytest.raises(ValidationError):
            RunConfig(j_values=[1.0, -1.0])
        with pytest.raises(ValidationError):
            RunConfig(j_values=[1.0, 3.0], dt_values=[0.01, 0.03])
        with pytest.raises(ValidationError):
            RunConfig(error_scheme="euler")


class TestLoadConfig:

    def test_merge_order(self, tmp_path, monkeypatch):
        monkeypatch.delenv(WORKERS_ENV, raising=False)
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"_comment": "ignored", "preset": "smoke", "n_walkers": 7, "master_seed": 1}))
        config = load_run_config(str(path), {"master_seed": 2, "noise": None})
        assert config.n_trajectories == 50
        assert config.n_walkers == 7
        assert config.master_seed == 2
        assert config.noise == "both"

    def test_worker_environment(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "3")
        assert load_run_config().workers == 3
        assert load_run_config(overrides={"workers": 5}).workers == 5
        monkeypatch.setenv(WORKERS_ENV, "many")
        with pytest.raises(ValueError):
            load_run_config()

    def test_unreadable_files(self, tmp_path):
        with pytest.raises(ValueError):
            load_run_config(str(tmp_path / "missing.json"))
        broken = tmp_path / "broken.json"
        broken.write_text("{not json")
        with pytest.raises(ValueError):
            load_run_config(str(broken))
        with pytest.raises(ValueError):
            load_run_config(overrides={"preset": "huge"})

    def test_shipped_configs_are_valid(self, monkeypatch):
        from pathlib import Path

        import active_steering

        monkeypatch.delenv(WORKERS_ENV, raising=False)
        config_dir = Path(active_steering.__file__).parent / "config"
        paths = sorted(config_dir.glob("*.json"))
        assert len(paths) == 13
        for path in paths:
            load_run_config(str(path))


class TestOutput:

    def test_hash_ignores_execution_fields(self):
        base = RunConfig()
        assert config_hash(base) == config_hash(RunConfig(workers=4, output_dir="elsewhere"))
        assert config_hash(base) != config_hash(RunConfig(master_seed=1))

    def test_sweep_csv(self, tmp_path):
        points = [SweepPoint(0.1, 0.9, 0.01, 0.1, 0.8, 10), SweepPoint(1.0 / 3.0, 0.5, 0.02, math.sqrt(0.02), 0.6, 10)]
        path = write_csv(sweep_frame(points), tmp_path / "sweep.csv", "abc")
        assert path.read_text().splitlines()[0] == f"{HASH_PREFIX}abc"
        loaded, hash_value = read_sweep_csv(path)
        assert hash_value == "abc"
        assert loaded[1].gamma == 1.0 / 3.0
        assert loaded[1].fidelity_std == math.sqrt(0.02)

    def test_not_a_sweep_csv(self, tmp_path):
        path = tmp_path / "other.csv"
        pd.DataFrame({"a": [1]}).to_csv(path, index=False)
        with pytest.raises(ValueError):
            read_sweep_csv(path)
        assert read_config_hash(path) is None

    def test_hash_mismatch(self, tmp_path):
        config = RunConfig()
        path = write_csv(sweep_frame([]), tmp_path / "sweep.csv", config_hash(config))
        assert check_config_hash(path, config)
        assert not check_config_hash(path, RunConfig(master_seed=9))

    def test_json_nan_becomes_null(self, tmp_path):
        path = write_json({"value": float("nan"), "nested": [1.0, float("inf")]}, tmp_path / "x.json")
        assert json.loads(path.read_text()) == {"nested": [1.0, None], "value": None}

    def test_trajectory_columns(self, tmp_path):
        one = simulate_trajectory(TrajectoryJob.from_config(small_config(tmp_path), RunConfig().model_spec()))
        assert list(trajectory_frame(one).columns) == [
            "step", "time", "alpha", "xi", "eta", "F_target", "F_0", "F_1", "r_x", "r_y", "r_z", "purity_walker_avg"]
        config = small_config(tmp_path, protocol="n2-bell-0+")
        two = trajectory_frame(simulate_trajectory(TrajectoryJob.from_config(config, config.model_spec())))
        assert {"F_0+", "F_0-", "F_1+", "F_1-"} <= set(two.columns)
        assert two["r_x"].isna().all()

    def test_ensemble_columns(self):
        protocol = build_protocol("n1-target-zero")
        states = np.array([np.diag([1.0, 0.0]), np.eye(2) / 2]).astype(complex)
        frame = ensemble_frame(np.array([0, 10]), np.array([0.0, 0.3]), states, protocol)
        assert list(frame.columns) == ["step", "time", "F_target", "F_0", "F_1", "r_x", "r_y", "r_z", "purity"]
        assert frame["F_target"].tolist() == pytest.approx([1.0, 0.5])
        assert frame["r_z"].tolist() == pytest.approx([1.0, 0.0])
        assert frame["purity"].tolist() == pytest.approx([1.0, 0.5])


class TestServices:

    def test_run_single(self, tmp_path):
        result = TrajectoryService().run_single(small_config(tmp_path, gamma=0.1))
        assert set(result.files) == {"trajectory", "summary", "provenance"}
        assert result.summary.n_steps == 20
        assert 0.0 <= result.summary.late_mean_fidelity <= 1.0
        frame = pd.read_csv(result.files["trajectory"], comment="#")
        assert len(frame) == 20
        assert "wall_time_s" not in result.files["summary"].read_text()

    def test_run_single_reports_energy_scales(self, tmp_path):
        config = small_config(tmp_path, gamma=0.1)
        summary = TrajectoryService().run_single(config).summary
        assert summary.supercurrent_scale == pytest.approx(0.98 * math.sin(0.485 * math.pi))
        assert summary.andreev_energy == pytest.approx(andreev_energy(config.model_spec()))

    def test_restricted_menu_reaches_the_walkers(self, tmp_path):
        config = small_config(tmp_path, gamma=0.1, steering_set=[[0]])
        job = TrajectoryJob.from_config(config, config.model_spec())
        assert job.steering_set == ((0,),)
        record = simulate_trajectory(job)
        assert np.all(record.choices == 0)

    async def test_ensemble(self, tmp_path):
        result = await EnsembleService().run_ensemble(small_config(tmp_path, gamma=0.1))
        assert result.steps[0] == 0
        assert list(result.steps[1:]) == [5, 10, 15, 20]
        assert set(result.files) == {"ensemble", "summary", "provenance"}
        assert all(path.exists() for path in result.files.values())
        assert len(result.summary.final_bloch) == 3
        assert result.summary.n_trajectories == 2
        frame = pd.read_csv(result.files["ensemble"], comment="#")
        assert frame["F_target"].iloc[0] == pytest.approx(0.5)
        assert np.all(frame["purity"] <= 1.0 + 1e-9)

    async def test_sweep_points(self, tmp_path):
        result = await SweepService().run_sweep(small_config(tmp_path))
        assert [p.n_trajectories for p in result.points] == [2] * 5
        assert not result.partial
        assert np.allclose([p.gamma for p in result.points], np.logspace(-2, 0, 5))

    async def test_failed_trajectories_flag_the_point(self, tmp_path, monkeypatch):
        real = sweep_module.summarize_trajectory

        def flaky(job):
            if job.point_index == 2:
                raise RuntimeError("worker died")
            return real(job)

        monkeypatch.setattr(sweep_module, "summarize_trajectory", flaky)
        result = await SweepService().run_sweep(small_config(tmp_path))
        assert result.partial
        assert result.points[2].failed
        assert math.isnan(result.points[2].purity)
        assert not result.points[1].failed
        assert len(result.errors) == 2

    @pytest.mark.slow
    async def test_worker_count_does_not_change_results(self, tmp_path):
        service = SweepService()
        serial = await service.run_sweep(small_config(tmp_path, workers=1))
        parallel = await service.run_sweep(small_config(tmp_path, workers=2))
        assert [p.to_dict() for p in serial.points] == [p.to_dict() for p in parallel.points]

import dataclasses
import math

import numpy as np
import pytest

from steering_core import linalg
from steering_core.diagnostics import (
    SpectrumError,
    SweepPoint,
    ThresholdError,
    TrajectoryRecord,
    WindowSummary,
    aggregate_summaries,
    bloch_vector,
    density_from_bloch,
    dominant_frequency,
    ensemble_average,
    fidelity,
    late_time_stats,
    locate_threshold,
    purity,
    rabi_frequency,
    scaling_collapse,
    window_summary,
)

GRID = np.logspace(-3, 1, 17)


def _record(fidelities, snapshot_steps, snapshots) -> TrajectoryRecord:
    n = len(fidelities)
    return TrajectoryRecord(
        n_qubits=1,
        dt=0.1,
        choices=np.zeros(n, dtype=int),
        xi=np.zeros(n, dtype=int),
        eta=np.ones(n, dtype=int),
        fidelity=np.asarray(fidelities, dtype=float),
        reference_fidelities=np.zeros((n, 2)),
        reference_labels=("0", "1"),
        purity=np.ones(n),
        snapshot_steps=np.asarray(snapshot_steps),
        snapshots=np.asarray(snapshots, dtype=complex),
    )


def _sweep(purities, fidelities=None, variance=0.01, n=100):
    fidelities = fidelities if fidelities is not None else [0.9] * len(purities)
    return [SweepPoint(gamma=float(g), mean_fidelity=f, fidelity_variance=variance,
                       fidelity_std=math.sqrt(variance), purity=p, n_trajectories=n)
            for g, p, f in zip(GRID, purities, fidelities)]


class TestStateMeasures:

    def test_fidelity_and_purity(self):
        mixed = np.eye(2, dtype=complex) / 2
        assert fidelity(mixed, np.array([1, 0])) == pytest.approx(0.5)
        assert purity(mixed) == pytest.approx(0.5)
        assert purity(np.eye(4, dtype=complex) / 4) == pytest.approx(0.25)

    def test_global_phase_does_not_matter(self, rng):
        walkers = rng.normal(size=(5, 4)) + 1j * rng.normal(size=(5, 4))
        walkers /= np.linalg.norm(walkers, axis=1)[:, None]
        target = np.array([1, 0, 0, 1j]) / math.sqrt(2)
        rho = linalg.ensemble_density(walkers)
        phased = linalg.ensemble_density(walkers * np.exp(1j * rng.uniform(0, 2 * math.pi, size=(5, 1))))
        assert fidelity(phased, target) == pytest.approx(fidelity(rho, target), abs=1e-12)
        assert fidelity(rho, np.exp(0.7j) * target) == pytest.approx(fidelity(rho, target), abs=1e-12)
        assert purity(phased) == pytest.approx(purity(rho), abs=1e-12)

    def test_purity_lower_bound(self, random_density):
        for dim in (2, 4):
            for _ in range(20):
                assert 1 / dim - 1e-9 <= purity(random_density(dim)) <= 1 + 1e-9

    def test_purity_rejects_negative_states(self):
        with pytest.raises(ValueError):
            purity(np.diag([1.2, -0.2]).astype(complex))

    def test_bloch_vector(self):
        r = np.array([0.1, -0.4, 0.3])
        assert np.allclose(bloch_vector(density_from_bloch(r)), r)
        with pytest.raises(ValueError):
            bloch_vector(np.eye(4, dtype=complex) / 4)


class TestLateTimeStatistics:

    def test_window_average(self):
        ground, excited = np.diag([1, 0]), np.diag([0, 1])
        record = _record(np.arange(10) / 10, [5, 10], [ground, excited])
        summary = window_summary(record, 0.2)
        assert summary.mean_fidelity == pytest.approx(0.85)
        assert summary.n_snapshots == 1
        assert np.allclose(summary.mean_density, excited)

    def test_empty_window(self):
        record = _record([], [], np.zeros((0, 2, 2)))
        with pytest.raises(ValueError):
            window_summary(record, 0.2)

    def test_aggregate_uses_sample_variance(self):
        rho = np.eye(2, dtype=complex) / 2
        summaries = [WindowSummary(f, rho, 1) for f in (0.7, 0.8, 0.9)]
        point = aggregate_summaries(summaries, gamma=0.5)
        assert point.mean_fidelity == pytest.approx(0.8)
        assert point.fidelity_variance == pytest.approx(0.01)
        assert point.fidelity_std == pytest.approx(0.1)
        assert point.purity == pytest.approx(0.5)
        with pytest.raises(ValueError):
            aggregate_summaries(summaries[:1], gamma=0.5)

    def test_purity_of_averaged_state(self):
        ground, excited = np.diag([1, 0]), np.diag([0, 1])
        records = [_record([1.0] * 5, [5], [ground]), _record([0.0] * 5, [5], [excited])]
        point = late_time_stats(records, 0.2)
        assert point.purity == pytest.approx(0.5)
        assert point.mean_fidelity == pytest.approx(0.5)

    def test_sweep_point_row(self):
        row = _sweep([0.5] * 17)[0].to_dict()
        assert list(row) == ["gamma", "mean_F", "var_F", "std_F", "purity", "n_traj"]


class TestThreshold:

    def test_minimum_is_refined_in_log_rate(self):
        purities = 0.5 + 0.1 * (np.log10(GRID) + 1) ** 2
        assert locate_threshold(_sweep(purities)) == pytest.approx(0.1, rel=1e-9)

    @pytest.mark.parametrize("scale", [0.5, 2.0, 10.0])
    def test_threshold_follows_the_gap(self, scale):
        # Rescaling every rate together with Delta leaves Gamma_c / Delta unchanged
        purities = 0.5 + 0.1 * (np.log10(GRID) + 1) ** 2
        rescaled = [dataclasses.replace(p, gamma=p.gamma * scale) for p in _sweep(purities)]
        assert locate_threshold(rescaled) / scale == pytest.approx(locate_threshold(_sweep(purities)), rel=1e-9)

    def test_minimum_at_grid_edge(self):
        with pytest.raises(ThresholdError):
            locate_threshold(_sweep(np.linspace(1.0, 0.3, 17)))

    def test_too_few_points(self):
        with pytest.raises(ThresholdError):
            locate_threshold(_sweep([0.9, 0.5, 0.9]))

    def test_onset_of_plateau(self):
        purities = np.maximum(0.25, 1.0 - 0.25 * (np.log10(GRID) + 3))
        assert locate_threshold(_sweep(purities), method="onset") == pytest.approx(10 ** -0.3, rel=1e-9)

    def test_onset_needs_a_drop(self):
        with pytest.raises(ThresholdError):
            locate_threshold(_sweep([0.25] + [0.3] * 16), method="onset")
        with pytest.raises(ThresholdError):
            locate_threshold(_sweep([0.4] * 17), method="onset")

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            locate_threshold(_sweep([0.5] * 17), method="knee")


class TestScalingCollapse:

    def test_identical_curves_collapse(self):
        curve = _sweep([0.5] * 17)
        assert scaling_collapse({0.01: curve, 0.03: curve}, gamma_c=0.1) == 0.0

    def test_only_rates_below_threshold_count(self):
        fidelities = np.where(GRID <= 0.1, 0.9, 0.5)
        low = _sweep([0.5] * 17, fidelities=list(fidelities))
        high = _sweep([0.5] * 17, fidelities=[0.9] * 17)
        assert scaling_collapse({0.01: low, 0.05: high}, gamma_c=0.1) == 0.0
        expected = 0.4 / math.sqrt(0.01 / 100 + 0.01 / 100)
        assert scaling_collapse({0.01: low, 0.05: high}, gamma_c=10.0) == pytest.approx(expected)


class TestDominantFrequency:

    def test_peak_on_a_bin(self):
        n, dt = 2000, 0.05
        omega = 2 * math.pi * 5 / (n * dt)
        trace = 0.5 + 0.1 * np.cos(omega * np.arange(n) * dt) + 1e-4 * np.arange(n)
        assert dominant_frequency(trace, dt) == pytest.approx(omega, rel=1e-9)

    def test_flat_trace(self):
        with pytest.raises(SpectrumError):
            dominant_frequency(np.ones(512), 0.1)

    def test_short_trace(self):
        with pytest.raises(ValueError):
            dominant_frequency(np.ones(10), 0.1)

    def test_noise_has_no_resolved_peak(self, rng):
        with pytest.raises(SpectrumError):
            dominant_frequency(rng.normal(size=1024), 0.1, min_snr=100.0)

    def test_rabi_frequency_is_half_the_ripple(self):
        n, dt = 2000, 0.05
        rabi = math.pi * 10 / (n * dt)
        trace = np.cos(rabi * np.arange(n) * dt) ** 2
        assert rabi_frequency(trace, dt) == pytest.approx(rabi, rel=1e-9)


class TestEnsembleAverage:

    def test_mean_per_snapshot(self, random_density):
        first = np.stack([random_density(2), random_density(2)])
        second = np.stack([random_density(2), random_density(2)])
        averaged = ensemble_average([first, second])
        assert averaged.shape == (2, 2, 2)
        assert np.allclose(averaged[1], (first[1] + second[1]) / 2)
        assert np.trace(averaged[0]).real == pytest.approx(1.0)

    def test_invalid_stacks(self, random_density):
        with pytest.raises(ValueError):
            ensemble_average([])
        with pytest.raises(ValueError):
            ensemble_average([np.stack([random_density(2)]), np.stack([random_density(2), random_density(2)])])

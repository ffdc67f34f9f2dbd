# Trajectory Service
"""
Service for single measurement trajectories.

Jobs are plain picklable records so the sweep service can ship them to
worker processes; the module-level functions are the worker entry points.
"""

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from active_steering import __version__
from active_steering.harness.models import RunConfig, RunSummary
from active_steering.harness.output import config_hash, trajectory_frame, write_csv, write_json
from steering_core.diagnostics import (
    SpectrumError,
    TrajectoryRecord,
    WindowSummary,
    purity,
    rabi_frequency,
    window_summary,
)
from steering_core.dynamics import RngPolicy, evolve_trajectory
from steering_core.model import ModelSpec, SteeringChoice, andreev_energy, supercurrent_scale
from steering_core.steering import build_protocol

logger = logging.getLogger(__name__)


# ============================================================================
# Data Models
# ============================================================================

@dataclass(frozen=True)
class TrajectoryJob:
    """One unit of work: a trajectory at one sweep point."""
    spec: ModelSpec
    protocol: str
    policy: str
    n_steps: int
    n_walkers: int
    snapshot_stride: int
    window_fraction: float
    master_seed: int
    point_index: int = 0
    trajectory_index: int = 0
    steering_set: Optional[Tuple[SteeringChoice, ...]] = None
    error_scheme: Optional[str] = None

    @classmethod
    def from_config(cls, config: RunConfig, spec: ModelSpec, point_index: int = 0,
                    trajectory_index: int = 0) -> "TrajectoryJob":
        return cls(
            spec=spec,
            protocol=config.protocol,
            policy=config.policy,
            n_steps=config.n_steps,
            n_walkers=config.n_walkers,
            snapshot_stride=config.snapshot_stride,
            window_fraction=config.window_fraction,
            master_seed=config.master_seed,
            point_index=point_index,
            trajectory_index=trajectory_index,
            steering_set=config.choices,
            error_scheme=config.error_scheme,
        )


@dataclass
class RunResult:
    """Result of a single-trajectory run."""
    record: TrajectoryRecord
    summary: RunSummary
    files: Dict[str, Path]
    wall_time: float


# ============================================================================
# Worker Entry Points
# ============================================================================

def simulate_trajectory(job: TrajectoryJob) -> TrajectoryRecord:
    streams = RngPolicy(job.master_seed).trajectory_streams(job.point_index, job.trajectory_index)
    return evolve_trajectory(
        job.spec,
        build_protocol(job.protocol, choices=job.steering_set),
        job.n_steps,
        streams,
        n_walkers=job.n_walkers,
        policy=job.policy,
        snapshot_stride=job.snapshot_stride,
        error_scheme=job.error_scheme,
    )


def summarize_trajectory(job: TrajectoryJob) -> WindowSummary:
    """Run a trajectory and keep only its late-time averages."""
    return window_summary(simulate_trajectory(job), job.window_fraction)


def trajectory_snapshots(job: TrajectoryJob) -> Tuple[np.ndarray, np.ndarray]:
    """Run a trajectory and keep only its (snapshot steps, ensemble-average states)."""
    record = simulate_trajectory(job)
    return record.snapshot_steps, record.snapshots


def _rabi_or_none(record: TrajectoryRecord) -> Optional[float]:
    # Skip the first quarter, where the state is still approaching the target
    trace = record.fidelity[record.n_steps // 4:]
    try:
        return rabi_frequency(trace, record.dt)
    except (SpectrumError, ValueError) as e:
        logger.debug(f"No Rabi frequency: {e}")
        return None


# ============================================================================
# Trajectory Service
# ============================================================================

class TrajectoryService:
    """
    Service class for single-point runs.

    Usage:
        service = TrajectoryService()
        result = service.run_single(config)
    """

    def __init__(self):
        logger.info("TrajectoryService initialized")

    def run_single(self, config: RunConfig, output_dir: Optional[Path] = None) -> RunResult:
        """
        Run one trajectory and write its per-step CSV and JSON summary.

        Args:
            config: Run configuration
            output_dir: Overrides config.output_dir

        Returns:
            RunResult with the record and written files

        Raises:
            OSError: if the output directory is not writable
        """
        out = Path(output_dir or config.output_dir)
        spec = config.model_spec()
        logger.info(f"🚀 Single run: {config.protocol}, gamma_ad={spec.gamma_ad:g}, "
                    f"gamma_pd={spec.gamma_pd:g}, {config.n_steps} steps, {config.n_walkers} walkers")

        start = time.perf_counter()
        record = simulate_trajectory(TrajectoryJob.from_config(config, spec))
        wall_time = time.perf_counter() - start

        late_fidelity, late_purity = None, None
        if record.n_steps > 0:
            late = window_summary(record, config.window_fraction)
            late_fidelity, late_purity = late.mean_fidelity, purity(late.mean_density)

        hash_value = config_hash(config)
        summary = RunSummary(
            config_hash=hash_value,
            master_seed=config.master_seed,
            protocol=config.protocol,
            policy=config.policy,
            gamma_ad=spec.gamma_ad,
            gamma_pd=spec.gamma_pd,
            andreev_energy=andreev_energy(spec),
            supercurrent_scale=supercurrent_scale(spec),
            n_steps=record.n_steps,
            n_walkers=config.n_walkers,
            n_clicks=int(np.count_nonzero(record.xi)),
            late_mean_fidelity=late_fidelity,
            late_purity=late_purity,
            rabi_frequency=_rabi_or_none(record),
        )
        files = {
            "trajectory": write_csv(trajectory_frame(record), out / "trajectory.csv", hash_value),
            "summary": write_json(summary, out / "summary.json"),
            "provenance": write_json(provenance(config, wall_time), out / "provenance.json"),
        }
        logger.info(f"✅ Single run finished in {wall_time:.1f}s, late fidelity {late_fidelity}")
        return RunResult(record=record, summary=summary, files=files, wall_time=wall_time)


def provenance(config: RunConfig, wall_time: float, **extra) -> dict:
    """Non-deterministic run metadata, kept apart from the result files."""
    return {
        "config_hash": config_hash(config),
        "master_seed": config.master_seed,
        "code_version": __version__,
        "wall_time_s": wall_time,
        "workers": config.workers,
        **extra,
    }


# Singleton instance
trajectory_service = TrajectoryService()

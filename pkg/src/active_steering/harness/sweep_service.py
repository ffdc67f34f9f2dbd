# Sweep Service
"""
Service for error-rate sweeps.

Every (rate, trajectory) pair is an independent job with its own random
streams. Jobs run on a bounded process pool and are aggregated by
(rate index, trajectory index), never by completion order, so the results do
not depend on the worker count.
"""

import asyncio
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

from active_steering import __version__
from active_steering.harness.models import RunConfig
from active_steering.harness.output import config_hash
from active_steering.harness.trajectory_service import TrajectoryJob, summarize_trajectory
from steering_core.core_config import LOGGING_CONFIG
from steering_core.diagnostics import SweepPoint, aggregate_summaries

logger = logging.getLogger(__name__)


# ============================================================================
# Data Models
# ============================================================================

@dataclass
class SweepResult:
    """Sweep points plus provenance."""
    points: List[SweepPoint]
    dt: float
    config_hash: str
    master_seed: int
    code_version: str
    wall_time: float
    errors: List[str] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return any(p.failed for p in self.points)


def _failed_point(gamma: float, n_ok: int, n_failed: int) -> SweepPoint:
    nan = float("nan")
    return SweepPoint(gamma=gamma, mean_fidelity=nan, fidelity_variance=nan, fidelity_std=nan,
                      purity=nan, n_trajectories=n_ok, n_failed=n_failed)


# ============================================================================
# Sweep Service
# ============================================================================

class SweepService:
    """
    Service class for running error-rate sweeps on a process pool.

    Usage:
        service = SweepService()
        result = await service.run_sweep(config)
    """

    def __init__(self):
        logger.info("SweepService initialized")

    def build_jobs(self, config: RunConfig, dt: Optional[float] = None) -> List[List[TrajectoryJob]]:
        """Jobs grouped by rate index, each group ordered by trajectory index."""
        jobs = []
        for point_index, gamma in enumerate(config.gamma_grid()):
            spec = config.model_spec(gamma=float(gamma), dt=dt)
            jobs.append([TrajectoryJob.from_config(config, spec, point_index, t)
                         for t in range(config.n_trajectories)])
        return jobs

    async def execute(self, jobs: List[TrajectoryJob], workers: int, worker: Optional[Callable] = None) -> list:
        """Run jobs in order; failures come back as exception objects in their slot."""
        worker = worker or summarize_trajectory
        if workers == 1:
            results = []
            for i, job in enumerate(jobs):
                try:
                    results.append(worker(job))
                except Exception as e:
                    results.append(e)
                self._progress(i + 1, len(jobs))
            return results

        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [loop.run_in_executor(pool, worker, job) for job in jobs]
            return await asyncio.gather(*futures, return_exceptions=True)

    def _aggregate(self, gamma: float, chunk: list, errors: List[str]) -> SweepPoint:
        summaries = [r for r in chunk if not isinstance(r, BaseException)]
        failures = [r for r in chunk if isinstance(r, BaseException)]
        for failure in failures:
            errors.append(f"gamma={gamma:.6g}: {type(failure).__name__}: {failure}")
        if len(summaries) >= 2:
            point = aggregate_summaries(summaries, gamma, n_failed=len(failures))
        else:
            point = _failed_point(gamma, len(summaries), len(failures))
        if failures:
            logger.error(f"❌ {len(failures)} trajectory failure(s) at gamma={gamma:.4g}")
        logger.info(f"📊 gamma={gamma:.4g}: F={point.mean_fidelity:.4f} +- {point.fidelity_std:.4f}, "
                    f"purity={point.purity:.4f}")
        return point

    async def run_point(self, config: RunConfig, gamma: float, dt: Optional[float] = None) -> SweepPoint:
        """Statistics at a single error rate, with the streams of grid index 0."""
        spec = config.model_spec(gamma=gamma, dt=dt)
        jobs = [TrajectoryJob.from_config(config, spec, 0, t) for t in range(config.n_trajectories)]
        return self._aggregate(gamma, await self.execute(jobs, config.workers), [])

    def _progress(self, done: int, total: int) -> None:
        every = LOGGING_CONFIG["progress_every"]
        if every and (done % every == 0 or done == total):
            logger.debug(f"🔄 {done}/{total} trajectories")

    async def run_sweep(self, config: RunConfig, dt: Optional[float] = None) -> SweepResult:
        """
        Run all trajectories of a sweep and aggregate them per rate.

        Args:
            config: Run configuration (grid, ensembles, workers)
            dt: Time step override for scaling-collapse sweeps

        Returns:
            SweepResult; points with failed trajectories are flagged
        """
        dt = config.dt if dt is None else dt
        grid = config.gamma_grid()
        groups = self.build_jobs(config, dt)
        flat = [job for group in groups for job in group]
        logger.info(f"🚀 Sweep: {config.protocol}, {config.noise} noise, dt={dt:g}, "
                    f"{len(grid)} rates x {config.n_trajectories} trajectories on {config.workers} worker(s)")

        start = time.perf_counter()
        results = await self.execute(flat, config.workers)
        wall_time = time.perf_counter() - start

        points, errors = [], []
        for point_index, gamma in enumerate(grid):
            chunk = results[point_index * config.n_trajectories:(point_index + 1) * config.n_trajectories]
            points.append(self._aggregate(float(gamma), chunk, errors))

        if any(math.isnan(p.purity) for p in points):
            logger.warning("⚠️ Sweep is partial; some rates have no statistics")
        logger.info(f"✅ Sweep finished in {wall_time:.1f}s")
        return SweepResult(
            points=points,
            dt=dt,
            config_hash=config_hash(config),
            master_seed=config.master_seed,
            code_version=__version__,
            wall_time=wall_time,
            errors=errors,
        )


# Singleton instance
sweep_service = SweepService()

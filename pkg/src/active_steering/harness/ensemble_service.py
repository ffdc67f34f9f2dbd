# Ensemble Service
"""
Service for trajectory-averaged state histories.

Runs ``n_trajectories`` independent trajectories at one parameter point and
averages their ensemble-average snapshots step by step, giving the path of
the averaged state (for one qubit, a curve inside the Bloch ball).
"""

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from active_steering.harness.models import EnsembleSummary, RunConfig
from active_steering.harness.output import config_hash, ensemble_frame, write_csv, write_json
from active_steering.harness.sweep_service import SweepService, sweep_service
from active_steering.harness.trajectory_service import TrajectoryJob, provenance, trajectory_snapshots
from steering_core import linalg
from steering_core.diagnostics import bloch_vector, ensemble_average, fidelity, purity
from steering_core.steering import build_protocol

logger = logging.getLogger(__name__)


# ============================================================================
# Data Models
# ============================================================================

@dataclass
class EnsembleResult:
    """Averaged states at step 0 and at every snapshot step."""
    steps: np.ndarray
    states: np.ndarray
    summary: EnsembleSummary
    files: Dict[str, Path]
    wall_time: float


# ============================================================================
# Ensemble Service
# ============================================================================

class EnsembleService:
    """
    Service class for trajectory-averaged runs.

    Usage:
        service = EnsembleService()
        result = await service.run_ensemble(config)
    """

    def __init__(self, runner: Optional[SweepService] = None):
        self.runner = runner or sweep_service
        logger.info("EnsembleService initialized")

    async def run_ensemble(self, config: RunConfig, output_dir: Optional[Path] = None) -> EnsembleResult:
        """
        Average the snapshot histories of many trajectories at one rate.

        Args:
            config: Run configuration; rates come from gamma or gamma_ad/gamma_pd
            output_dir: Overrides config.output_dir

        Returns:
            EnsembleResult with the averaged states and written files

        Raises:
            RuntimeError: if fewer than two trajectories succeed
        """
        out = Path(output_dir or config.output_dir)
        spec = config.model_spec()
        protocol = build_protocol(config.protocol, choices=config.choices)
        jobs = [TrajectoryJob.from_config(config, spec, 0, t) for t in range(config.n_trajectories)]
        logger.info(f"🚀 Ensemble: {config.protocol}, gamma_ad={spec.gamma_ad:g}, gamma_pd={spec.gamma_pd:g}, "
                    f"{config.n_trajectories} trajectories on {config.workers} worker(s)")

        start = time.perf_counter()
        results = await self.runner.execute(jobs, config.workers, worker=trajectory_snapshots)
        wall_time = time.perf_counter() - start

        histories = [r for r in results if not isinstance(r, BaseException)]
        failures = [r for r in results if isinstance(r, BaseException)]
        for failure in failures:
            logger.error(f"❌ Trajectory failed: {type(failure).__name__}: {failure}")
        if len(histories) < 2:
            raise RuntimeError(f"Only {len(histories)} of {len(jobs)} trajectories succeeded")

        initial = linalg.outer(protocol.initial_state)
        steps = np.concatenate([[0], histories[0][0]])
        states = np.concatenate([initial[None], ensemble_average([h[1] for h in histories])])

        hash_value = config_hash(config)
        final = states[-1]
        summary = EnsembleSummary(
            config_hash=hash_value,
            master_seed=config.master_seed,
            protocol=config.protocol,
            gamma_ad=spec.gamma_ad,
            gamma_pd=spec.gamma_pd,
            n_trajectories=len(histories),
            n_failed=len(failures),
            snapshot_stride=config.snapshot_stride,
            final_fidelity=fidelity(final, protocol.target_state),
            final_purity=purity(final),
            final_bloch=bloch_vector(final).tolist() if spec.n_qubits == 1 else None,
        )
        frame = ensemble_frame(steps, steps * spec.dt, states, protocol)
        files = {
            "ensemble": write_csv(frame, out / "ensemble.csv", hash_value),
            "summary": write_json(summary, out / "ensemble.json"),
            "provenance": write_json(provenance(config, wall_time), out / "provenance.json"),
        }
        logger.info(f"✅ Ensemble finished in {wall_time:.1f}s, final fidelity {summary.final_fidelity:.4f}, "
                    f"purity {summary.final_purity:.4f}")
        return EnsembleResult(steps=steps, states=states, summary=summary, files=files, wall_time=wall_time)


# Singleton instance
ensemble_service = EnsembleService()

"""
Staged sweep pipeline: prepare, simulate, analyse, export.
"""

import logging
import math
import time
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict

from active_steering.harness.models import RunConfig, ScalingSummary, SweepPointSummary, SweepSummary
from active_steering.harness.output import config_hash, sweep_frame, write_csv, write_json
from active_steering.harness.sweep_service import SweepResult, SweepService, sweep_service
from active_steering.harness.trajectory_service import provenance
from steering_core.diagnostics import SweepPoint, ThresholdError, locate_threshold, scaling_collapse

logger = logging.getLogger(__name__)

# Largest pooled z-score at which curves of different time steps count as collapsed
COLLAPSE_Z_LIMIT = 2.0

# ============================================================================
# State Models
# ============================================================================


class SweepState(BaseModel):
    """State carried between the stages of one sweep."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: RunConfig
    output_dir: str = ""
    config_hash: str = ""

    # One result per swept value of sweep_axis ("dt" or "steer_strength"); a plain sweep has a single entry
    sweep_axis: str = "dt"
    results: Dict[float, SweepResult] = {}

    gamma_c: Optional[float] = None
    threshold_note: Optional[str] = None
    # Located threshold per swept value; None where location failed
    thresholds: Dict[float, Optional[float]] = {}
    max_z_score: Optional[float] = None

    files: Dict[str, str] = {}
    wall_time: float = 0.0

    @property
    def partial(self) -> bool:
        return any(result.partial for result in self.results.values())

    @property
    def primary(self) -> SweepResult:
        """Result at the configured dt or J (first swept value otherwise)."""
        configured = getattr(self.config, self.sweep_axis)
        if configured in self.results:
            return self.results[configured]
        return next(iter(self.results.values()))


# ============================================================================
# Sweep Flow
# ============================================================================


class SweepFlow:
    """
    Sweep pipeline over the configured error-rate grid.

    1. Prepare the output directory and config hash
    2. Simulate one sweep per time step or steering strength
    3. Locate the threshold and, for several time steps, test the collapse
    4. Export CSV and JSON results plus provenance
    """

    def __init__(self, config: RunConfig, service: Optional[SweepService] = None):
        self.state = SweepState(config=config)
        self.service = service or sweep_service

    def prepare(self) -> None:
        logger.info("🚀 Preparing sweep...")
        out = Path(self.state.config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.state.output_dir = str(out)
        self.state.config_hash = config_hash(self.state.config)
        logger.info(f"📋 Config hash: {self.state.config_hash[:12]}")

    async def simulate(self) -> None:
        config = self.state.config
        if config.j_values:
            self.state.sweep_axis = "steer_strength"
            for j in config.j_values:
                logger.info(f"🔄 J sweep: J={j:g}")
                self.state.results[j] = await self.service.run_sweep(config.model_copy(update={"steer_strength": j}),
                                                                 dt=config.dt)
            return
        for dt in config.dt_values or [config.dt]:
            self.state.results[dt] = await self.service.run_sweep(config, dt=dt)

    def analyse(self) -> None:
        """Locate the threshold of every swept curve; a failed location is recorded, not raised."""
        config = self.state.config
        for value, result in self.state.results.items():
            points = [p for p in result.points if not p.failed]
            try:
                self.state.thresholds[value] = locate_threshold(points, config.threshold_method)
            except ThresholdError as e:
                self.state.thresholds[value] = None
                if result is self.state.primary:
                    self.state.threshold_note = str(e)
                    logger.warning(f"⚠️ Threshold not located: {e}")
        self.state.gamma_c = next(g for v, g in self.state.thresholds.items()
                                  if self.state.results[v] is self.state.primary)
        if self.state.gamma_c is not None:
            logger.info(f"✅ Threshold gamma_c = {self.state.gamma_c:.4g} ({config.threshold_method})")

        if config.dt_values and self.state.gamma_c is not None:
            sweeps = {dt: [p for p in result.points if not p.failed] for dt, result in self.state.results.items()}
            self.state.max_z_score = scaling_collapse(sweeps, self.state.gamma_c)
            logger.info(f"📊 Scaling collapse: max z-score {self.state.max_z_score:.3g}")

    def export(self) -> None:
        config = self.state.config
        out = Path(self.state.output_dir)
        files: Dict[str, Path] = {}
        prefix = "J" if self.state.sweep_axis == "steer_strength" else "dt"
        for value, result in self.state.results.items():
            suffix = "" if len(self.state.results) == 1 else f"_{prefix}{value:g}"
            files[f"sweep{suffix}.csv"] = write_csv(sweep_frame(result.points), out / f"sweep{suffix}.csv",
                                                    self.state.config_hash)
            files[f"sweep{suffix}.json"] = write_json(self._summary(result, value), out / f"sweep{suffix}.json")

        if config.dt_values:
            z = self.state.max_z_score
            scaling = ScalingSummary(
                config_hash=self.state.config_hash,
                dt_values=list(config.dt_values),
                gamma_c=self.state.gamma_c,
                max_z_score=z,
                collapsed=None if z is None else bool(z <= COLLAPSE_Z_LIMIT),
            )
            files["scaling.json"] = write_json(scaling, out / "scaling.json")

        errors = [e for result in self.state.results.values() for e in result.errors]
        files["provenance.json"] = write_json(
            provenance(config, self.state.wall_time, errors=errors,
                       sweep_wall_times={f"{v:g}": r.wall_time for v, r in self.state.results.items()}),
            out / "provenance.json",
        )
        self.state.files = {name: str(path) for name, path in files.items()}
        logger.info(f"✅ Wrote {len(files)} files to {out}")

    def _summary(self, result: SweepResult, value: float) -> SweepSummary:
        config = self.state.config
        steer_strength = value if self.state.sweep_axis == "steer_strength" else config.steer_strength
        return SweepSummary(
            config_hash=self.state.config_hash,
            master_seed=config.master_seed,
            protocol=config.protocol,
            noise=config.noise,
            dt=result.dt,
            steer_strength=steer_strength,
            threshold_method=config.threshold_method,
            gamma_c=self.state.thresholds.get(value),
            threshold_note=self.state.threshold_note if result is self.state.primary else None,
            partial=result.partial,
            points=[_point_summary(p) for p in result.points],
        )

    async def kickoff(self) -> SweepState:
        """Run all stages and return the final state."""
        start = time.perf_counter()
        self.prepare()
        await self.simulate()
        self.analyse()
        self.state.wall_time = time.perf_counter() - start
        self.export()
        if self.state.partial:
            logger.error("❌ Sweep finished with failed trajectories")
        return self.state


def _point_summary(point: SweepPoint) -> SweepPointSummary:
    def finite(value: float) -> Optional[float]:
        return value if math.isfinite(value) else None

    return SweepPointSummary(
        gamma=point.gamma,
        mean_F=finite(point.mean_fidelity),
        var_F=finite(point.fidelity_variance),
        std_F=finite(point.fidelity_std),
        purity=finite(point.purity),
        n_traj=point.n_trajectories,
        n_failed=point.n_failed,
    )


def reanalyse(points: List[SweepPoint], method: str) -> float:
    """Threshold of an existing sweep, skipping points without statistics."""
    return locate_threshold([p for p in points if not p.failed], method)

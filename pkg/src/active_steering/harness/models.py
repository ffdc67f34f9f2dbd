"""
Pydantic models for run configuration and result summaries.
"""

import json
import math
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from steering_core.core_config import REFERENCE_PARAMETERS, SIMULATION_CONFIG
from steering_core.model import STEERING_LABELS, ModelSpec, SteeringChoice
from steering_core.steering import normalize_protocol_name, protocol_qubits

WORKERS_ENV = "STEERING_WORKERS"

NoiseMode = Literal["both", "phase", "amplitude"]
PresetName = Literal["paper", "smoke"]
ErrorScheme = Literal["kraus", "diffusive"]

# ============================================================================
# Presets
# ============================================================================

PRESETS: Dict[str, Dict[str, Any]] = {
    # Publication-scale ensembles
    "paper": {"n_trajectories": 500, "n_walkers": 100, "gamma_count": 17},
    # CI-scale ensembles, not publication quality
    "smoke": {"n_trajectories": 50, "n_walkers": 20, "gamma_count": 9},
}


# ============================================================================
# Run Configuration
# ============================================================================

class RunConfig(BaseModel):
    """Configuration of a single run, a sweep, or a verification pass."""

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "protocol": "n1-target-zero",
                "dt": 0.03,
                "noise": "both",
                "gamma_min": 0.001,
                "gamma_max": 10.0,
                "gamma_count": 17,
                "n_trajectories": 500,
                "n_walkers": 100,
                "master_seed": 12345,
            }
        },
    )

    # Physics
    delta: float = Field(default=REFERENCE_PARAMETERS["delta"], gt=0, description="Superconducting gap, energy unit")
    transmission: float = Field(default=REFERENCE_PARAMETERS["transmission"], gt=0, le=1, description="Transmission T")
    phase: float = Field(default=REFERENCE_PARAMETERS["phase"], ge=0, lt=2 * math.pi, description="Phase difference")
    coupling: Optional[float] = Field(
        default=None, ge=0, description="Detector coupling Lambda; defaults by qubit count")
    steer_strength: float = Field(default=REFERENCE_PARAMETERS["steer_strength"], ge=0, description="Steering strength J")
    dt: float = Field(default=REFERENCE_PARAMETERS["dt"], gt=0, description="Time step")
    gamma_ad: float = Field(default=0.0, ge=0, description="Amplitude damping rate for single runs")
    gamma_pd: float = Field(default=0.0, ge=0, description="Dephasing rate for single runs")
    gamma: Optional[float] = Field(default=None, ge=0, description="Single-run error rate applied via noise mode")
    asymmetry: float = Field(default=1.0, gt=0, description="Coupling multiplier of qubit 2")

    # Protocol and policy
    protocol: str = Field(default="n1-target-zero", description="n1-target-zero | n1-target-one | n2-bell-{0+,0-,1+,1-}")
    policy: Literal["greedy", "random"] = Field(default="greedy", description="Steering policy")
    steering_set: Optional[List[List[int]]] = Field(
        default=None, description="Restricted steering menu, one label 0-6 per qubit; null keeps all choices")
    error_scheme: ErrorScheme = Field(default=SIMULATION_CONFIG["error_scheme"], description="Walker error channels")

    # Ensembles
    n_steps: int = Field(default=SIMULATION_CONFIG["n_steps"], ge=0, description="Steps per trajectory")
    window_fraction: float = Field(default=SIMULATION_CONFIG["window_fraction"], gt=0, le=1,
                                   description="Late-time window fraction")
    n_trajectories: int = Field(default=500, ge=2, description="Trajectories per sweep point")
    n_walkers: int = Field(default=SIMULATION_CONFIG["n_walkers"], ge=1, description="Walkers per trajectory")

    # Sweep grid
    gamma_min: float = Field(default=1e-3, gt=0, description="Smallest error rate of the log grid")
    gamma_max: float = Field(default=10.0, gt=0, description="Largest error rate of the log grid")
    gamma_count: int = Field(default=17, ge=5, description="Number of grid points")
    noise: NoiseMode = Field(default="both", description="Which channels the swept rate drives")
    threshold_method: Literal["minimum", "onset"] = Field(default="minimum", description="Threshold locator")
    dt_values: Optional[List[float]] = Field(default=None, description="Time steps for a scaling-collapse sweep")
    j_values: Optional[List[float]] = Field(default=None, description="Steering strengths for a J sweep")

    # Execution and output
    master_seed: int = Field(default=12345, ge=0, lt=2 ** 64, description="Master seed of all random streams")
    output_dir: str = Field(default="results", description="Output directory")
    snapshot_stride: int = Field(default=SIMULATION_CONFIG["snapshot_stride"], ge=1,
                                 description="Steps between stored ensemble states")
    workers: int = Field(default=1, ge=1, description="Worker processes")
    preset: Optional[PresetName] = Field(default=None, description="Preset the values started from")

    @field_validator("protocol")
    @classmethod
    def _check_protocol(cls, value: str) -> str:
        value = normalize_protocol_name(value)
        protocol_qubits(value)
        return value

    @field_validator("dt_values")
    @classmethod
    def _check_dt_values(cls, values: Optional[List[float]]) -> Optional[List[float]]:
        if values is not None and (len(values) < 2 or any(v <= 0 for v in values)):
            raise ValueError("dt_values needs at least two positive time steps")
        return values

    @field_validator("j_values")
    @classmethod
    def _check_j_values(cls, values: Optional[List[float]]) -> Optional[List[float]]:
        if values is not None and (len(values) < 2 or any(v < 0 for v in values)):
            raise ValueError("j_values needs at least two non-negative steering strengths")
        return values

    @model_validator(mode="after")
    def _check_grid(self) -> "RunConfig":
        if self.gamma_max <= self.gamma_min:
            raise ValueError(f"gamma_max ({self.gamma_max}) must exceed gamma_min ({self.gamma_min})")
        if self.dt_values and self.j_values:
            raise ValueError("dt_values and j_values cannot be swept together")
        return self

    @model_validator(mode="after")
    def _check_steering_set(self) -> "RunConfig":
        if self.steering_set is None:
            return self
        if not self.steering_set:
            raise ValueError("steering_set must not be empty")
        for choice in self.steering_set:
            if len(choice) != self.n_qubits:
                raise ValueError(f"Steering choice {choice} needs {self.n_qubits} label(s) for {self.protocol}")
            if any(not 0 <= label < len(STEERING_LABELS) for label in choice):
                raise ValueError(f"Steering labels must lie in 0..{len(STEERING_LABELS) - 1}, got {choice}")
        return self

    @property
    def n_qubits(self) -> int:
        return protocol_qubits(self.protocol)

    @property
    def resolved_coupling(self) -> float:
        if self.coupling is not None:
            return self.coupling
        return REFERENCE_PARAMETERS["coupling"] if self.n_qubits == 1 else REFERENCE_PARAMETERS["coupling_two_qubit"]

    @property
    def choices(self) -> Optional[Tuple[SteeringChoice, ...]]:
        """Restricted menu in file order, or None for the full menu."""
        if self.steering_set is None:
            return None
        return tuple(tuple(choice) for choice in self.steering_set)

    def gamma_grid(self) -> np.ndarray:
        return np.logspace(math.log10(self.gamma_min), math.log10(self.gamma_max), self.gamma_count)

    def rates_for(self, gamma: float) -> Tuple[float, float]:
        """(gamma_ad, gamma_pd) driven by one swept rate."""
        return {
            "both": (gamma, gamma),
            "phase": (0.0, gamma),
            "amplitude": (gamma, 0.0),
        }[self.noise]

    def model_spec(self, gamma: Optional[float] = None, dt: Optional[float] = None,
                   steer_strength: Optional[float] = None) -> ModelSpec:
        """
        ModelSpec of this configuration.

        Args:
            gamma: Swept rate; falls back to ``self.gamma`` and then to the
                explicit gamma_ad / gamma_pd fields
            dt: Time step override for scaling sweeps
            steer_strength: J override for J sweeps
        """
        gamma = self.gamma if gamma is None else gamma
        gamma_ad, gamma_pd = self.rates_for(gamma) if gamma is not None else (self.gamma_ad, self.gamma_pd)
        return ModelSpec(
            n_qubits=self.n_qubits,
            delta=self.delta,
            transmission=self.transmission,
            phase=self.phase,
            coupling=self.resolved_coupling,
            steer_strength=self.steer_strength if steer_strength is None else steer_strength,
            dt=self.dt if dt is None else dt,
            gamma_ad=gamma_ad,
            gamma_pd=gamma_pd,
            asymmetry=self.asymmetry,
        )


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Merge defaults, preset, config file, environment and CLI overrides.

    Keys starting with "_" in the file are annotations and are dropped.

    Raises:
        ValueError: unreadable file or invalid values
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    file_values: Dict[str, Any] = {}
    if path:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as e:
            raise ValueError(f"Cannot read config file {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ValueError(f"Config file {path} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ValueError(f"Config file {path} must contain a JSON object")
        file_values = {k: v for k, v in raw.items() if not k.startswith("_")}

    preset = overrides.get("preset", file_values.get("preset"))
    if preset is not None and preset not in PRESETS:
        raise ValueError(f"Unknown preset '{preset}'; choose one of {', '.join(PRESETS)}")
    merged: Dict[str, Any] = dict(PRESETS.get(preset, {}))
    merged.update(file_values)
    env_workers = os.environ.get(WORKERS_ENV)
    if env_workers:
        try:
            merged["workers"] = int(env_workers)
        except ValueError as e:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got '{env_workers}'") from e
    merged.update(overrides)
    return RunConfig.model_validate(merged)


# ============================================================================
# Result Summaries
# ============================================================================

class SweepPointSummary(BaseModel):
    """One row of a sweep."""
    gamma: float
    mean_F: Optional[float] = Field(description="Mean late-time fidelity")
    var_F: Optional[float] = Field(description="Sample variance across trajectories")
    std_F: Optional[float] = Field(description="Sample standard deviation across trajectories")
    purity: Optional[float] = Field(description="Purity of the trajectory- and time-averaged state")
    n_traj: int
    n_failed: int = 0


class SweepSummary(BaseModel):
    """JSON summary of a sweep."""
    config_hash: str
    master_seed: int
    protocol: str
    noise: NoiseMode
    dt: float
    steer_strength: float
    threshold_method: str
    gamma_c: Optional[float] = Field(default=None, description="Located threshold rate")
    threshold_note: Optional[str] = None
    partial: bool = False
    points: List[SweepPointSummary]


class RunSummary(BaseModel):
    """JSON summary of a single trajectory run."""
    config_hash: str
    master_seed: int
    protocol: str
    policy: str
    gamma_ad: float
    gamma_pd: float
    andreev_energy: float = Field(description="E_A = Delta sqrt(1 - T sin^2(phi/2))")
    supercurrent_scale: float = Field(description="I_0 = T Delta sin(phi/2)")
    n_steps: int
    n_walkers: int
    n_clicks: int
    late_mean_fidelity: Optional[float] = None
    late_purity: Optional[float] = None
    rabi_frequency: Optional[float] = Field(
        default=None, description="Rabi frequency of the target-fidelity ripple; null when unresolved")


class EnsembleSummary(BaseModel):
    """JSON summary of a trajectory-averaged state history."""
    config_hash: str
    master_seed: int
    protocol: str
    gamma_ad: float
    gamma_pd: float
    n_trajectories: int
    n_failed: int = 0
    snapshot_stride: int
    final_fidelity: Optional[float] = None
    final_purity: Optional[float] = None
    final_bloch: Optional[List[float]] = Field(default=None, description="r of the final averaged state, one qubit only")


class ScalingSummary(BaseModel):
    """JSON summary of a scaling-collapse sweep."""
    config_hash: str
    dt_values: List[float]
    gamma_c: Optional[float]
    max_z_score: Optional[float] = Field(default=None, description="Largest pooled z-score below gamma_c")
    collapsed: Optional[bool] = None

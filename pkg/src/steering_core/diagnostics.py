"""
Diagnostics over trajectory records: fidelity, purity, Bloch extraction,
late-time ensemble statistics, trajectory-averaged state histories, threshold
location and oscillation frequency.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import fft, signal

from steering_core import linalg
from steering_core.core_config import SWEEP_CONFIG, TOLERANCE_CONFIG
from steering_core.linalg import Operator, StateVector

logger = logging.getLogger(__name__)


class ThresholdError(ValueError):
    """The sweep grid cannot bracket a threshold."""


class SpectrumError(ValueError):
    """No reliable spectral peak in a trace."""


# ============================================================================
# Data Models
# ============================================================================

@dataclass
class TrajectoryRecord:
    """
    Per-step log of one measurement trajectory (a walker-ensemble average).

    Step arrays cover steps 1..n_steps; index k holds the choice and outcome
    used in step k+1 and the diagnostics of the state after it. Snapshots of
    the ensemble-average state are taken every ``snapshot_stride`` steps and
    at the final step.
    """
    n_qubits: int
    dt: float
    choices: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    fidelity: np.ndarray
    reference_fidelities: np.ndarray
    reference_labels: Tuple[str, ...]
    purity: np.ndarray
    snapshot_steps: np.ndarray
    snapshots: np.ndarray
    bloch: Optional[np.ndarray] = None

    @property
    def n_steps(self) -> int:
        return int(self.choices.shape[0])

    @property
    def steps(self) -> np.ndarray:
        return np.arange(1, self.n_steps + 1)

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.dt


@dataclass
class WindowSummary:
    """Late-time averages of one trajectory."""
    mean_fidelity: float
    mean_density: Operator
    n_snapshots: int


@dataclass
class SweepPoint:
    """Trajectory statistics at one error rate."""
    gamma: float
    mean_fidelity: float
    fidelity_variance: float
    fidelity_std: float
    purity: float
    n_trajectories: int
    n_failed: int = 0

    @property
    def failed(self) -> bool:
        return self.n_failed > 0

    def to_dict(self) -> Dict[str, float]:
        return {
            "gamma": self.gamma,
            "mean_F": self.mean_fidelity,
            "var_F": self.fidelity_variance,
            "std_F": self.fidelity_std,
            "purity": self.purity,
            "n_traj": self.n_trajectories,
        }


# ============================================================================
# State Measures
# ============================================================================

def fidelity(rho: Operator, target: StateVector) -> float:
    """<target|rho|target>, clipped to [0, 1]."""
    value = np.vdot(target, rho @ target).real
    return float(min(1.0, max(0.0, value)))


def purity(rho_bar: Operator) -> float:
    """
    Tr(rho^2) after clipping round-off negative eigenvalues.

    Raises:
        ValueError: if an eigenvalue is below the density-matrix tolerance
    """
    eigenvalues = linalg.eigvals_hermitian(rho_bar)
    if eigenvalues[0] < -TOLERANCE_CONFIG["eigenvalue"]:
        raise ValueError(f"Not a density matrix: eigenvalue {eigenvalues[0]:.3e}")
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    return float(np.sum(eigenvalues ** 2))


def bloch_vector(rho: Operator) -> np.ndarray:
    """r_j = Tr(rho sigma_j) of a single-qubit state."""
    if rho.shape != (2, 2):
        raise linalg.DimensionError(f"Bloch vector needs a 2x2 operator, got {rho.shape}")
    return np.array([linalg.herm_expect(rho, pauli) for pauli in linalg.PAULIS])


def density_from_bloch(r: np.ndarray) -> Operator:
    r = np.asarray(r, dtype=float)
    return 0.5 * (linalg.IDENTITY_2 + r[0] * linalg.SIGMA_X + r[1] * linalg.SIGMA_Y + r[2] * linalg.SIGMA_Z)


# ============================================================================
# Late-Time Statistics
# ============================================================================

def window_summary(record: TrajectoryRecord, window_fraction: float) -> WindowSummary:
    """
    Time-average a record over its final window.

    Raises:
        ValueError: if the window is empty
    """
    if record.n_steps == 0 or not 0.0 < window_fraction <= 1.0:
        raise ValueError(f"Empty late-time window ({record.n_steps} steps, fraction {window_fraction})")
    width = max(1, math.ceil(window_fraction * record.n_steps))
    first_step = record.n_steps - width + 1
    in_window = record.snapshot_steps >= first_step
    if not np.any(in_window):
        raise ValueError(f"No state snapshots inside the final {width} steps")
    return WindowSummary(
        mean_fidelity=float(np.mean(record.fidelity[-width:])),
        mean_density=record.snapshots[in_window].mean(axis=0),
        n_snapshots=int(np.count_nonzero(in_window)),
    )


def aggregate_summaries(summaries: Sequence[WindowSummary], gamma: float, n_failed: int = 0) -> SweepPoint:
    """Combine per-trajectory late-time summaries into one sweep point."""
    if len(summaries) < 2:
        raise ValueError(f"Need at least 2 trajectories, got {len(summaries)}")
    fidelities = np.array([s.mean_fidelity for s in summaries])
    rho_bar = np.mean([s.mean_density for s in summaries], axis=0)
    variance = float(np.var(fidelities, ddof=1))
    return SweepPoint(
        gamma=gamma,
        mean_fidelity=float(np.mean(fidelities)),
        fidelity_variance=variance,
        fidelity_std=math.sqrt(variance),
        purity=purity(rho_bar),
        n_trajectories=len(summaries),
        n_failed=n_failed,
    )


def late_time_stats(records: Sequence[TrajectoryRecord], window_fraction: float, gamma: float = 0.0) -> SweepPoint:
    """
    Late-time fidelity statistics and purity of the averaged state.

    Args:
        records: At least two trajectory records
        window_fraction: Final fraction of each trajectory that is averaged
        gamma: Error rate label of the resulting point

    Returns:
        SweepPoint with mean, sample variance and standard deviation of the
        time-averaged fidelities, and the purity of the trajectory- and
        time-averaged state
    """
    return aggregate_summaries([window_summary(r, window_fraction) for r in records], gamma)


# ============================================================================
# Threshold Location
# ============================================================================

def _sorted_grid(sweep: Sequence[SweepPoint]) -> Tuple[np.ndarray, np.ndarray]:
    if len(sweep) < SWEEP_CONFIG["min_grid_points"]:
        raise ThresholdError(f"Need at least {SWEEP_CONFIG['min_grid_points']} sweep points, got {len(sweep)}")
    ordered = sorted(sweep, key=lambda p: p.gamma)
    gammas = np.array([p.gamma for p in ordered])
    if np.any(gammas <= 0):
        raise ThresholdError("Threshold location needs a log grid of positive rates")
    return gammas, np.array([p.purity for p in ordered])


def locate_threshold(sweep: Sequence[SweepPoint], method: str = "minimum") -> float:
    """
    Error rate at which the purity gap closes.

    Args:
        sweep: Sweep points on a log-spaced grid
        method: "minimum" for a purity dip (refined by a parabola in log rate);
            "onset" for curves that drop onto a plateau, returning the first
            rate at which the purity reaches its minimum to within a fixed
            fraction of its range

    Returns:
        Located threshold rate

    Raises:
        ThresholdError: grid too small, or minimum at the grid boundary
    """
    gammas, purities = _sorted_grid(sweep)
    log_gammas = np.log(gammas)

    if method == "minimum":
        i = int(np.argmin(purities))
        if i == 0 or i == len(gammas) - 1:
            raise ThresholdError(f"Purity minimum at grid boundary (rate {gammas[i]:.3g}); widen the grid")
        x, y = log_gammas[i - 1:i + 2], purities[i - 1:i + 2]
        a, b, _ = np.polyfit(x, y, 2)
        if a <= 0:
            return float(gammas[i])
        vertex = float(np.clip(-b / (2 * a), x[0], x[2]))
        return math.exp(vertex)

    if method == "onset":
        low, high = purities.min(), purities.max()
        if high - low <= TOLERANCE_CONFIG["eigenvalue"]:
            raise ThresholdError("Purity curve is flat; no onset")
        level = low + SWEEP_CONFIG["onset_fraction"] * (high - low)
        i = int(np.flatnonzero(purities <= level)[0])
        if i == 0:
            raise ThresholdError("Purity already on its plateau at the first grid point; widen the grid")
        fraction = (purities[i - 1] - level) / (purities[i - 1] - purities[i])
        return math.exp(log_gammas[i - 1] + fraction * (log_gammas[i] - log_gammas[i - 1]))

    raise ValueError(f"Unknown threshold method: {method}")


def scaling_collapse(sweeps: Mapping[float, Sequence[SweepPoint]], gamma_c: float) -> float:
    """
    Largest pooled z-score between fidelity curves of different time steps.

    Args:
        sweeps: Sweep points keyed by time step, on a common rate grid
        gamma_c: Only rates up to this threshold are compared

    Returns:
        max |F_a - F_b| / sqrt(var_a/n_a + var_b/n_b) over shared rates and
        curve pairs; 0 when fewer than two curves overlap
    """
    curves = {dt: {round(math.log(p.gamma), 9): p for p in points if 0 < p.gamma <= gamma_c}
              for dt, points in sweeps.items()}
    worst = 0.0
    keys = sorted(curves)
    for ia, dt_a in enumerate(keys):
        for dt_b in keys[ia + 1:]:
            for g in curves[dt_a].keys() & curves[dt_b].keys():
                a, b = curves[dt_a][g], curves[dt_b][g]
                error = math.sqrt(a.fidelity_variance / a.n_trajectories + b.fidelity_variance / b.n_trajectories)
                difference = abs(a.mean_fidelity - b.mean_fidelity)
                if error == 0.0:
                    z = 0.0 if difference == 0.0 else math.inf
                else:
                    z = difference / error
                worst = max(worst, z)
    return worst


# ============================================================================
# Oscillation Frequency
# ============================================================================

def dominant_frequency(fidelity_trace: Sequence[float], dt: float, min_snr: Optional[float] = None) -> float:
    """
    Angular frequency of the strongest oscillation in a trace.

    The trace is linearly detrended; the zero-frequency bin is excluded.

    Raises:
        ValueError: if the trace is shorter than the configured minimum
        SpectrumError: flat trace, or peak power less than ``min_snr`` times
            the largest power outside the peak neighbourhood
    """
    trace = np.asarray(fidelity_trace, dtype=float)
    min_length = SWEEP_CONFIG["min_trace_length"]
    if trace.ndim != 1 or trace.size < min_length:
        raise ValueError(f"Need a trace of at least {min_length} samples, got {trace.size}")
    detrended = signal.detrend(trace)
    if np.ptp(detrended) <= TOLERANCE_CONFIG["algebraic"]:
        raise SpectrumError("Flat trace has no spectral peak")

    power = np.abs(fft.rfft(detrended)) ** 2
    omegas = 2 * math.pi * fft.rfftfreq(trace.size, d=dt)
    peak = 1 + int(np.argmax(power[1:]))

    guard = SWEEP_CONFIG["snr_guard_bins"]
    mask = np.ones(power.size, dtype=bool)
    mask[0] = False
    mask[max(1, peak - guard):peak + guard + 1] = False
    background = power[mask].max() if np.any(mask) else 0.0
    snr = math.inf if background == 0.0 else power[peak] / background
    min_snr = SWEEP_CONFIG["min_snr"] if min_snr is None else min_snr
    if snr < min_snr:
        raise SpectrumError(f"Spectral peak not resolved (SNR {snr:.2f} < {min_snr})")
    logger.debug(f"Dominant frequency {omegas[peak]:.4f} with SNR {snr:.1f}")
    return float(omegas[peak])


def rabi_frequency(fidelity_trace: Sequence[float], dt: float, min_snr: Optional[float] = None) -> float:
    """
    Rabi frequency Omega of a fidelity ripple F ~ cos^2(Omega t).

    The fidelity oscillates at twice the Rabi frequency, so this is half the
    dominant angular frequency. For a Bell target under E_A (sigma_z^(1) +
    sigma_z^(2)) the Rabi frequency is the qubit splitting 2 E_A.
    """
    return 0.5 * dominant_frequency(fidelity_trace, dt, min_snr=min_snr)


def ensemble_average(snapshot_sets: Sequence[np.ndarray]) -> np.ndarray:
    """
    Step-by-step mean of equally strided snapshot stacks from many trajectories.

    Raises:
        ValueError: no stacks, or stacks of different shapes
    """
    if not snapshot_sets:
        raise ValueError("Need at least one trajectory to average")
    shapes = {np.shape(s) for s in snapshot_sets}
    if len(shapes) != 1:
        raise ValueError(f"Snapshot stacks differ in shape: {sorted(shapes)}")
    return np.mean(np.stack(snapshot_sets), axis=0)

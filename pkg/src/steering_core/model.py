"""
Physical model of one or two Andreev qubits under weak measurement.

Builds every operator the dynamics needs from a ``ModelSpec``: the Andreev
Hamiltonian, the steering menu, measurement jump operators (single detector
for one qubit, Bell-measured detector pair for two qubits), error channels,
Kraus operators (measurement and exact per-step error channels) and the Bell
structure.

The detector Hamiltonian only contributes a global phase and is dropped.
The coupling is stored as a single constant Lambda; the supercurrent scale
I_0 is a derived quantity reported next to every run.
"""

import itertools
import logging
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Literal, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.linalg import expm

from steering_core import linalg
from steering_core.core_config import REFERENCE_PARAMETERS, REGIME_CONFIG, TOLERANCE_CONFIG
from steering_core.linalg import Operator, StateVector

logger = logging.getLogger(__name__)

# Steering menu per qubit, in tie-break order
STEERING_LABELS = ("none", "+x", "-x", "+y", "-y", "+z", "-z")

SteeringChoice = Tuple[int, ...]


class Outcome(NamedTuple):
    """Measurement result of one step; eta is always +1 for a single qubit."""
    xi: int
    eta: int = 1


class ProbabilityRangeError(ValueError):
    """An outcome probability left [0, 1]; the time step is too large."""


# ============================================================================
# Parameter Record
# ============================================================================

class ModelSpec(BaseModel):
    """Physical parameters of one protocol instance."""

    model_config = ConfigDict(frozen=True)

    n_qubits: Literal[1, 2] = Field(default=1, description="Number of system qubits")
    delta: float = Field(default=REFERENCE_PARAMETERS["delta"], gt=0, description="Superconducting gap (energy unit)")
    transmission: float = Field(default=REFERENCE_PARAMETERS["transmission"], gt=0, le=1,
                                description="Point-contact transmission")
    phase: float = Field(default=REFERENCE_PARAMETERS["phase"], ge=0, lt=2 * math.pi,
                         description="Superconducting phase difference")
    coupling: float = Field(default=REFERENCE_PARAMETERS["coupling"], ge=0, description="System-detector coupling Lambda")
    steer_strength: float = Field(default=REFERENCE_PARAMETERS["steer_strength"], ge=0,
                                  description="Steering strength J")
    dt: float = Field(default=REFERENCE_PARAMETERS["dt"], gt=0, description="Time step")
    gamma_ad: float = Field(default=0.0, ge=0, description="Amplitude damping rate per qubit")
    gamma_pd: float = Field(default=0.0, ge=0, description="Pure dephasing rate per qubit")
    asymmetry: float = Field(default=1.0, gt=0, description="Coupling multiplier of qubit 2")

    @model_validator(mode="after")
    def _check_weak_measurement(self) -> "ModelSpec":
        limit = REGIME_CONFIG["weak_measurement_limit"]
        largest_coupling = self.coupling * (max(1.0, self.asymmetry) if self.n_qubits == 2 else 1.0)
        for name, value in (("J*dt", self.steer_strength * self.dt), ("Lambda*dt", largest_coupling * self.dt)):
            if value > limit:
                warnings.warn(f"{name} = {value:.3g} exceeds {limit}; outside the weak-measurement regime",
                              RuntimeWarning, stacklevel=2)
        return self

    @property
    def dim(self) -> int:
        return 2 ** self.n_qubits

    def with_rates(self, gamma_ad: float, gamma_pd: float) -> "ModelSpec":
        """Copy with new error rates."""
        return self.model_copy(update={"gamma_ad": gamma_ad, "gamma_pd": gamma_pd})


# ============================================================================
# Andreev Qubit
# ============================================================================

def andreev_energy(spec: ModelSpec) -> float:
    """E_A = Delta sqrt(1 - T sin^2(phi/2))."""
    return spec.delta * math.sqrt(1.0 - spec.transmission * math.sin(spec.phase / 2) ** 2)


def supercurrent_scale(spec: ModelSpec) -> float:
    """I_0 = T Delta sin(phi/2), reported in run summaries."""
    return spec.transmission * spec.delta * math.sin(spec.phase / 2)


def supercurrent_direction(spec: ModelSpec) -> np.ndarray:
    """Unit vector n with sigma_s = n . sigma."""
    e_a = andreev_energy(spec)
    if e_a <= 0.0:
        raise ValueError("Andreev energy vanishes (T = 1, phi = pi); supercurrent axis undefined")
    half = spec.phase / 2
    return np.array([
        0.0,
        spec.delta * math.sqrt(1.0 - spec.transmission) * math.sin(half) / e_a,
        -spec.delta * math.cos(half) / e_a,
    ])


def supercurrent_axis(spec: ModelSpec) -> Operator:
    """Rotated Pauli matrix sigma_s coupling the qubit to its detector."""
    n = supercurrent_direction(spec)
    return n[1] * linalg.SIGMA_Y + n[2] * linalg.SIGMA_Z


# ============================================================================
# Steering Menu
# ============================================================================

def steering_operator(label: int, strength: float) -> Operator:
    """Single-qubit steering term for one menu entry (0 = none)."""
    if not 0 <= label < len(STEERING_LABELS):
        raise ValueError(f"Steering label {label} out of range")
    if label == 0:
        return np.zeros((2, 2), dtype=complex)
    axis, sign = divmod(label - 1, 2)
    return (1.0 if sign == 0 else -1.0) * strength * linalg.PAULIS[axis]


def steering_set(n_qubits: int) -> List[SteeringChoice]:
    """All steering choices in lexicographic order (7 or 49 entries)."""
    return list(itertools.product(range(len(STEERING_LABELS)), repeat=n_qubits))


def choice_index(choice: SteeringChoice) -> int:
    index = 0
    for label in choice:
        index = index * len(STEERING_LABELS) + label
    return index


def choice_label(choice: SteeringChoice) -> str:
    return ",".join(STEERING_LABELS[label] for label in choice)


def _check_choice(spec: ModelSpec, choice: SteeringChoice) -> None:
    if len(choice) != spec.n_qubits or any(not 0 <= a < len(STEERING_LABELS) for a in choice):
        raise ValueError(f"Invalid steering choice {choice} for {spec.n_qubits} qubit(s)")


# ============================================================================
# Hamiltonians and Jump Operators
# ============================================================================

def system_hamiltonian(spec: ModelSpec, choice: SteeringChoice) -> Operator:
    """Sum over qubits of E_A sigma_z plus the chosen steering term."""
    _check_choice(spec, choice)
    e_a = andreev_energy(spec)
    h = np.zeros((spec.dim, spec.dim), dtype=complex)
    for qubit, label in enumerate(choice):
        local = e_a * linalg.SIGMA_Z + steering_operator(label, spec.steer_strength)
        h += linalg.embed(local, qubit, spec.n_qubits)
    return h


def effective_hamiltonian(spec: ModelSpec, choice: SteeringChoice) -> Operator:
    # The no-click detector element <0|H_sd|0> vanishes, so only H_s remains.
    return system_hamiltonian(spec, choice)


def measurement_jump(spec: ModelSpec, eta: int = 1) -> Operator:
    """
    Jump operator of the detector click.

    Args:
        spec: Model parameters
        eta: Bell parity of the detector pair (ignored for one qubit)

    Returns:
        c = -i sqrt(dt) Lambda sigma_s for one qubit, or
        c_eta = -i sqrt(dt) Lambda (eta sigma_s^(1) + a sigma_s^(2)) for two
    """
    if eta not in (-1, 1):
        raise ValueError(f"eta must be +1 or -1, got {eta}")
    sigma_s = supercurrent_axis(spec)
    prefactor = -1j * math.sqrt(spec.dt) * spec.coupling
    if spec.n_qubits == 1:
        return prefactor * sigma_s
    return prefactor * (eta * linalg.kron(sigma_s, linalg.IDENTITY_2)
                        + spec.asymmetry * linalg.kron(linalg.IDENTITY_2, sigma_s))


def error_jumps(spec: ModelSpec) -> List[Operator]:
    """Per qubit: sqrt(G_AD) sigma_minus then sqrt(G_PD/2) sigma_z; zero rates omitted."""
    return [op for _, op in _labelled_error_jumps(spec)]


def _labelled_error_jumps(spec: ModelSpec) -> List[Tuple[str, Operator]]:
    if spec.gamma_ad < 0 or spec.gamma_pd < 0:
        raise ValueError(f"Error rates must be non-negative (got {spec.gamma_ad}, {spec.gamma_pd})")
    channels = []
    for qubit in range(spec.n_qubits):
        if spec.gamma_ad > 0:
            channels.append((f"ad{qubit + 1}", math.sqrt(spec.gamma_ad)
                             * linalg.embed(linalg.SIGMA_MINUS, qubit, spec.n_qubits)))
        if spec.gamma_pd > 0:
            channels.append((f"pd{qubit + 1}", math.sqrt(spec.gamma_pd / 2)
                             * linalg.embed(linalg.SIGMA_Z, qubit, spec.n_qubits)))
    return channels


# ============================================================================
# Outcomes, Probabilities and Kraus Operators
# ============================================================================

def outcomes(n_qubits: int) -> List[Outcome]:
    if n_qubits == 1:
        return [Outcome(0, 1), Outcome(1, 1)]
    return [Outcome(0, 1), Outcome(0, -1), Outcome(1, 1), Outcome(1, -1)]


def outcome_probabilities(rho: Operator, spec: ModelSpec,
                          choice: Optional[SteeringChoice] = None) -> Dict[Outcome, float]:
    """
    A priori outcome probabilities for the next step.

    The steering choice does not enter; it is accepted for symmetry with the
    other per-step operations.

    Raises:
        ProbabilityRangeError: if an entry leaves [0, 1] beyond tolerance
    """
    if choice is not None:
        _check_choice(spec, choice)
    ops = build_operators(spec)
    table = {}
    if spec.n_qubits == 1:
        p_click = spec.dt * linalg.herm_expect(rho, ops.jump_norms[1])
        table[Outcome(0, 1)] = 1.0 - p_click
        table[Outcome(1, 1)] = p_click
    else:
        for eta in (1, -1):
            p_click = spec.dt * linalg.herm_expect(rho, ops.jump_norms[eta])
            table[Outcome(0, eta)] = 0.5 * (1.0 - p_click)
            table[Outcome(1, eta)] = 0.5 * p_click
    tol = TOLERANCE_CONFIG["probability"]
    for outcome, p in table.items():
        if p < -tol or p > 1.0 + tol:
            raise ProbabilityRangeError(f"P{tuple(outcome)} = {p:.6g} outside [0, 1]; reduce dt")
    return table


def kraus_operators(spec: ModelSpec, choice: SteeringChoice) -> Dict[Outcome, Operator]:
    """Per-outcome Kraus operators, accurate to first order in dt."""
    h = effective_hamiltonian(spec, choice)
    eye = linalg.identity(spec.n_qubits)
    if spec.n_qubits == 1:
        c = measurement_jump(spec)
        no_click = eye - 1j * spec.dt * h - 0.5 * spec.dt * (c.conj().T @ c)
        return {Outcome(0, 1): no_click, Outcome(1, 1): math.sqrt(spec.dt) * c}
    kraus = {}
    for eta in (1, -1):
        c = measurement_jump(spec, eta)
        no_click = eye - 1j * spec.dt * h - 0.5 * spec.dt * (c.conj().T @ c)
        kraus[Outcome(0, eta)] = no_click / math.sqrt(2)
        kraus[Outcome(1, eta)] = math.sqrt(spec.dt / 2) * c
    return kraus


def kraus_completeness_residual(spec: ModelSpec, choice: Optional[SteeringChoice] = None) -> float:
    """Spectral norm of sum_k A_k^dag A_k - 1; scales as dt^2."""
    choice = choice if choice is not None else (0,) * spec.n_qubits
    total = sum(a.conj().T @ a for a in kraus_operators(spec, choice).values())
    return float(np.linalg.norm(total - linalg.identity(spec.n_qubits), 2))


def lindblad_generator(c: Operator) -> np.ndarray:
    """D[c] as a matrix acting on row-major vec(rho)."""
    eye = np.eye(c.shape[0], dtype=complex)
    cc = c.conj().T @ c
    return np.kron(c, c.conj()) - 0.5 * np.kron(cc, eye) - 0.5 * np.kron(eye, cc.T)


def channel_kraus(c: Operator, dt: float) -> np.ndarray:
    """
    Kraus operators of exp(dt D[c]), one error channel integrated exactly over a step.

    The propagator is reshuffled into its Choi matrix; eigenvectors with
    non-negligible weight, scaled by the root of the weight, are the Kraus
    operators (orthogonal in the trace inner product).

    Returns:
        Stack (n_kraus, dim, dim) with sum_a K_a^dag K_a = 1
    """
    dim = c.shape[0]
    propagator = expm(dt * lindblad_generator(c))
    choi = propagator.reshape(dim, dim, dim, dim).transpose(0, 2, 1, 3).reshape(dim * dim, dim * dim)
    weights, vectors = np.linalg.eigh(0.5 * (choi + choi.conj().T))
    keep = weights > TOLERANCE_CONFIG["algebraic"]
    return np.stack([math.sqrt(w) * v.reshape(dim, dim) for w, v in zip(weights[keep], vectors[:, keep].T)])


# ============================================================================
# Bell Structure
# ============================================================================

def bell_states() -> Dict[Outcome, StateVector]:
    """|Phi_{0,+-}> = (|00> +- |11>)/sqrt2 and |Phi_{1,+-}> = (|01> +- |10>)/sqrt2."""
    s = 1 / math.sqrt(2)
    return {
        Outcome(0, 1): np.array([s, 0, 0, s], dtype=complex),
        Outcome(0, -1): np.array([s, 0, 0, -s], dtype=complex),
        Outcome(1, 1): np.array([0, s, s, 0], dtype=complex),
        Outcome(1, -1): np.array([0, s, -s, 0], dtype=complex),
    }


def detector_bell_operators() -> Tuple[Operator, Operator]:
    """Commuting parity operators (tau_x tau_x, tau_z tau_z) diagonal in the Bell basis."""
    return (linalg.kron(linalg.SIGMA_X, linalg.SIGMA_X),
            linalg.kron(linalg.SIGMA_Z, linalg.SIGMA_Z))


def target_observable(xi: int, eta: int) -> Operator:
    """O_s = eta sigma_x sigma_x + (1 - 2 xi) sigma_z sigma_z; top eigenstate |Phi_{xi,eta}>."""
    xx, zz = detector_bell_operators()
    return eta * xx + (1 - 2 * xi) * zz


# ============================================================================
# Cached Operator Bundle
# ============================================================================

@dataclass(frozen=True)
class OperatorSet:
    """Read-only operators of one ModelSpec, stacked for the hot loops."""
    spec: ModelSpec
    choices: Tuple[SteeringChoice, ...]
    hamiltonians: np.ndarray
    outcomes: Tuple[Outcome, ...]
    jumps: Dict[int, Operator]
    jump_norms: Dict[int, Operator]
    error_jumps: np.ndarray
    error_labels: Tuple[str, ...]
    error_kraus: Tuple[np.ndarray, ...]

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def n_channels(self) -> int:
        return self.error_jumps.shape[0]


@lru_cache(maxsize=128)
def build_operators(spec: ModelSpec) -> OperatorSet:
    """Build (once per spec) the stacked Hamiltonians, jumps, error channels and their exact Kraus forms."""
    choices = tuple(steering_set(spec.n_qubits))
    hamiltonians = np.stack([system_hamiltonian(spec, choice) for choice in choices])
    etas = (1,) if spec.n_qubits == 1 else (1, -1)
    jumps = {eta: measurement_jump(spec, eta) for eta in etas}
    jump_norms = {eta: c.conj().T @ c for eta, c in jumps.items()}
    labelled = _labelled_error_jumps(spec)
    if labelled:
        errors = np.stack([op for _, op in labelled])
    else:
        errors = np.zeros((0, spec.dim, spec.dim), dtype=complex)
    error_kraus = tuple(channel_kraus(c, spec.dt) for c in errors)
    for array in (hamiltonians, errors, *jumps.values(), *jump_norms.values(), *error_kraus):
        array.setflags(write=False)
    logger.debug(f"Built operators for {spec.n_qubits} qubit(s), {len(labelled)} error channel(s)")
    return OperatorSet(
        spec=spec,
        choices=choices,
        hamiltonians=hamiltonians,
        outcomes=tuple(outcomes(spec.n_qubits)),
        jumps=jumps,
        jump_norms=jump_norms,
        error_jumps=errors,
        error_labels=tuple(label for label, _ in labelled),
        error_kraus=error_kraus,
    )

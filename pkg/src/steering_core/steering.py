"""
Active decision making and the single-qubit Bloch oracle.

Every step the controller evaluates, for each steering choice, the change of
the target observable averaged over all measurement outcomes and picks the
largest. For one qubit the same dynamics is also written as an iteration of
the Bloch vector, which serves as an independent check of the master
equation.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from steering_core import linalg
from steering_core.core_config import DECISION_CONFIG, TOLERANCE_CONFIG
from steering_core.diagnostics import bloch_vector, density_from_bloch
from steering_core.dynamics import error_increment, hamiltonian_increment, measurement_increment, sme_step
from steering_core.linalg import Operator, StateVector
from steering_core.model import (
    ModelSpec,
    Outcome,
    SteeringChoice,
    andreev_energy,
    bell_states,
    build_operators,
    choice_index,
    outcome_probabilities,
    steering_set,
    supercurrent_direction,
    target_observable,
)

logger = logging.getLogger(__name__)


class BlochRangeError(ValueError):
    """Bloch vector left the unit ball."""


# ============================================================================
# Protocols
# ============================================================================

@dataclass(frozen=True, eq=False)
class Protocol:
    """Initial state, target, observable and steering menu of one protocol."""
    name: str
    initial_state: StateVector
    target_state: StateVector
    observable: Operator
    steering_set: Tuple[SteeringChoice, ...]
    reference_states: Dict[str, StateVector] = field(default_factory=dict)

    def __post_init__(self):
        if not self.steering_set:
            raise ValueError("Steering set must not be empty")
        if not linalg.is_hermitian(self.observable):
            raise ValueError("Target observable must be Hermitian")
        if self.target_state.shape[0] != self.observable.shape[0]:
            raise linalg.DimensionError("Target state and observable dimensions differ")
        eigenvalues, eigenvectors = np.linalg.eigh(self.observable)
        if eigenvalues[-1] - eigenvalues[-2] <= TOLERANCE_CONFIG["algebraic"]:
            raise ValueError("Top eigenvalue of the observable is degenerate")
        overlap = abs(np.vdot(eigenvectors[:, -1], linalg.normalize(self.target_state))) ** 2
        if abs(overlap - 1.0) > TOLERANCE_CONFIG["eigenvalue"]:
            raise ValueError(f"Target is not the top eigenstate of the observable (overlap {overlap:.6f})")

    @property
    def n_qubits(self) -> int:
        return 1 if self.observable.shape[0] == 2 else 2


_KET_0 = np.array([1, 0], dtype=complex)
_KET_1 = np.array([0, 1], dtype=complex)
_KET_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
_BELL_LABELS = {"0+": Outcome(0, 1), "0-": Outcome(0, -1), "1+": Outcome(1, 1), "1-": Outcome(1, -1)}

PROTOCOL_NAMES = ("n1-target-zero", "n1-target-one") + tuple(f"n2-bell-{label}" for label in _BELL_LABELS)


def normalize_protocol_name(name: str) -> str:
    return name.strip().replace("−", "-")


def protocol_qubits(name: str) -> int:
    name = normalize_protocol_name(name)
    if name not in PROTOCOL_NAMES:
        raise ValueError(f"Unknown protocol '{name}'; choose one of {', '.join(PROTOCOL_NAMES)}")
    return 1 if name.startswith("n1-") else 2


def build_protocol(name: str, choices: Optional[Sequence[SteeringChoice]] = None) -> Protocol:
    """
    Build a named protocol.

    Args:
        name: "n1-target-zero", "n1-target-one" or "n2-bell-{0+,0-,1+,1-}"
        choices: Optional restriction of the steering menu

    Returns:
        Protocol starting from |+> (one qubit) or |++> (two qubits)
    """
    name = normalize_protocol_name(name)
    n_qubits = protocol_qubits(name)
    menu = tuple(tuple(c) for c in choices) if choices is not None else tuple(steering_set(n_qubits))
    if any(len(c) != n_qubits for c in menu):
        raise ValueError(f"Steering choices must have {n_qubits} entries")

    if n_qubits == 1:
        target, sign = (_KET_0, 1.0) if name == "n1-target-zero" else (_KET_1, -1.0)
        return Protocol(
            name=name,
            initial_state=_KET_PLUS.copy(),
            target_state=target.copy(),
            observable=sign * linalg.SIGMA_Z,
            steering_set=menu,
            reference_states={"0": _KET_0.copy(), "1": _KET_1.copy()},
        )

    bell = bell_states()
    target_outcome = _BELL_LABELS[name[len("n2-bell-"):]]
    return Protocol(
        name=name,
        initial_state=np.kron(_KET_PLUS, _KET_PLUS),
        target_state=bell[target_outcome].copy(),
        observable=target_observable(target_outcome.xi, target_outcome.eta),
        steering_set=menu,
        reference_states={label: bell[outcome].copy() for label, outcome in _BELL_LABELS.items()},
    )


# ============================================================================
# Expected Gains and Decisions
# ============================================================================

def expected_gain(rho: Operator, choice: SteeringChoice, spec: ModelSpec,
                  observable: Optional[Operator] = None) -> float:
    """
    Outcome-averaged change of <O_s> for one steering choice.

    sum over outcomes of P * Tr(d rho * O_s), with d rho from ``sme_step``.
    The observable defaults to sigma_z for one qubit.
    """
    if observable is None:
        _require_single_qubit(spec)
        observable = linalg.SIGMA_Z
    total = 0.0
    ops = build_operators(spec)
    for outcome, p in outcome_probabilities(rho, spec, choice).items():
        if not _outcome_possible(rho, ops.jump_norms[outcome.eta], outcome, p):
            continue
        total += p * linalg.herm_expect(sme_step(rho, outcome, spec, choice), observable)
    return total


def _outcome_possible(rho: Operator, k: Operator, outcome: Outcome, p: float) -> bool:
    if p <= 0.0:
        return False
    return outcome.xi == 0 or linalg.herm_expect(rho, k) >= TOLERANCE_CONFIG["null_jump"]


def expected_gains(rho: Operator, protocol: Protocol, spec: ModelSpec) -> np.ndarray:
    """
    Expected gain of every choice in the protocol menu.

    Evaluates the |outcomes| x |menu| master-equation increments as one
    stacked array; the outcome probabilities do not depend on the choice.
    """
    ops = build_operators(spec)
    hamiltonians = ops.hamiltonians[[choice_index(c) for c in protocol.steering_set]]
    commutators = hamiltonian_increment(rho, hamiltonians, spec.dt)
    errors = error_increment(rho, ops.error_jumps, spec.dt)
    gains = np.zeros(len(protocol.steering_set))
    for outcome, p in outcome_probabilities(rho, spec).items():
        if not _outcome_possible(rho, ops.jump_norms[outcome.eta], outcome, p):
            continue
        rest = measurement_increment(rho, ops.jumps[outcome.eta], outcome.xi, spec.dt) + errors
        increments = commutators + rest
        gains += p * np.einsum("aij,ji->a", increments, protocol.observable).real
    return gains


def select_choice(gains: np.ndarray) -> int:
    """Index of the largest gain; near-ties resolve to the smallest index."""
    gains = np.asarray(gains, dtype=float)
    top = gains.max()
    tolerance = DECISION_CONFIG["tie_atol"] + DECISION_CONFIG["tie_rtol"] * (top - gains.min())
    return int(np.flatnonzero(top - gains <= tolerance)[0])


def choose_steering(rho: Operator, protocol: Protocol, spec: ModelSpec) -> SteeringChoice:
    """Greedy steering choice for the current state."""
    return protocol.steering_set[select_choice(expected_gains(rho, protocol, spec))]


def random_choice(protocol: Protocol, rng: np.random.Generator) -> SteeringChoice:
    """Uniform draw from the menu, independent of the state."""
    return protocol.steering_set[int(rng.integers(len(protocol.steering_set)))]


# ============================================================================
# Closed Forms (one qubit, O_s = sigma_z)
# ============================================================================

_LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _LEVI_CIVITA[_i, _j, _k] = 1.0
    _LEVI_CIVITA[_i, _k, _j] = -1.0


def _axis_and_sign(label: int) -> Tuple[Optional[int], float]:
    if label == 0:
        return None, 0.0
    axis, sign = divmod(label - 1, 2)
    return axis, 1.0 if sign == 0 else -1.0


def _require_single_qubit(spec: ModelSpec) -> None:
    if spec.n_qubits != 1:
        raise ValueError("Bloch-vector forms exist for one qubit only")


def closed_form_gain(r: np.ndarray, choice: SteeringChoice, spec: ModelSpec) -> float:
    """
    Analytic gain of sigma_z for one qubit.

    2 s J dt eps_{z a j} r_j - dt G_AD (1 + r_z)
    - dt G_ms [2 (1 - n_z^2) r_z - 2 n_y n_z r_y], with G_ms = Lambda^2 dt.
    The bare E_A sigma_z term commutes with sigma_z and drops out.
    """
    _require_single_qubit(spec)
    r = np.asarray(r, dtype=float)
    n = supercurrent_direction(spec)
    gamma_ms = spec.coupling ** 2 * spec.dt
    axis, sign = _axis_and_sign(choice[0])
    steering = 0.0 if axis is None else 2 * sign * spec.steer_strength * spec.dt * (_LEVI_CIVITA[2, axis] @ r)
    return float(steering
                 - spec.dt * spec.gamma_ad * (1 + r[2])
                 - spec.dt * gamma_ms * (2 * (1 - n[2] ** 2) * r[2] - 2 * n[1] * n[2] * r[1]))


def pi_phase_gain(r: np.ndarray, choice: SteeringChoice, spec: ModelSpec) -> float:
    """Gain at phase pi without amplitude damping: 2 dt r . (-s J d_ay, s J d_ax, -G_ms)."""
    _require_single_qubit(spec)
    r = np.asarray(r, dtype=float)
    axis, sign = _axis_and_sign(choice[0])
    j = sign * spec.steer_strength
    vector = np.array([-j if axis == 1 else 0.0, j if axis == 0 else 0.0, -spec.coupling ** 2 * spec.dt])
    return float(2 * spec.dt * r @ vector)


# ============================================================================
# Bloch Iteration
# ============================================================================

def bloch_iterate(r: np.ndarray, choice: SteeringChoice, outcome: Outcome, spec: ModelSpec) -> np.ndarray:
    """
    Bloch-vector increment of one step.

    Precession about E_A z + s J e_a, the click reflection about the
    supercurrent axis, amplitude damping and dephasing.

    Raises:
        BlochRangeError: if |r| > 1 beyond tolerance
    """
    _require_single_qubit(spec)
    r = np.asarray(r, dtype=float)
    length = np.linalg.norm(r)
    if length > 1.0 + TOLERANCE_CONFIG["bloch_length"]:
        raise BlochRangeError(f"|r| = {length:.9f} outside the Bloch ball")

    field_vector = np.array([0.0, 0.0, andreev_energy(spec)])
    axis, sign = _axis_and_sign(choice[0])
    if axis is not None:
        field_vector[axis] += sign * spec.steer_strength

    dr = 2 * spec.dt * np.cross(field_vector, r)
    if outcome.xi == 1:
        n = supercurrent_direction(spec)
        dr += 2 * (n @ r) * n - 2 * r
    dr += spec.dt * spec.gamma_ad * np.array([-r[0] / 2, -r[1] / 2, -(1 + r[2])])
    dr += spec.dt * spec.gamma_pd * np.array([-r[0], -r[1], 0.0])
    return dr


def bloch_vs_sme_crosscheck(spec: ModelSpec, n_steps: int = 100, initial_bloch: Sequence[float] = (0.9, 0.0, 0.0),
                            jump_every: int = 10, outcome_sequence: Optional[Sequence[Outcome]] = None) -> float:
    """
    Largest componentwise gap between the Bloch iteration and the master equation.

    Both are driven by the same outcome record and the same greedy choices
    (taken from the master-equation state, target |0>).

    Args:
        jump_every: Put a click on every n-th step (0 for none) unless
            ``outcome_sequence`` is given
    """
    _require_single_qubit(spec)
    protocol = build_protocol("n1-target-zero")
    if outcome_sequence is None:
        outcome_sequence = [Outcome(1 if jump_every and (k + 1) % jump_every == 0 else 0)
                            for k in range(n_steps)]
    r = np.asarray(initial_bloch, dtype=float)
    rho = density_from_bloch(r)
    deviation = 0.0
    for step in range(n_steps):
        choice = choose_steering(rho, protocol, spec)
        outcome = Outcome(*outcome_sequence[step])
        r = r + bloch_iterate(r, choice, outcome, spec)
        rho = rho + sme_step(rho, outcome, spec, choice)
        deviation = max(deviation, float(np.max(np.abs(r - bloch_vector(rho)))))
    return deviation

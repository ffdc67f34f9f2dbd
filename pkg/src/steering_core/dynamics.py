"""
Stochastic dynamics of actively steered qubits.

Walker ensembles follow the jump-plus-bath stochastic Schroedinger equation:
all walkers of one trajectory share the detector outcome of every step and
draw independent Gaussian bath variables for the error channels. By default
each channel is integrated exactly over a step and the bath variable picks
one of its Kraus branches per walker. The walker average is one trajectory of
the stochastic master equation, which can also be integrated directly as an
oracle.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy import special

from steering_core import linalg
from steering_core.core_config import SIMULATION_CONFIG, TOLERANCE_CONFIG
from steering_core.diagnostics import TrajectoryRecord, bloch_vector, fidelity, purity
from steering_core.linalg import Operator, StateVector
from steering_core.model import (
    ModelSpec,
    OperatorSet,
    Outcome,
    SteeringChoice,
    build_operators,
    channel_kraus,
    choice_index,
    outcome_probabilities,
)

logger = logging.getLogger(__name__)

POLICIES = ("greedy", "random")
SME_SCHEMES = ("kraus", "euler")
ERROR_SCHEMES = ("kraus", "diffusive")


class NullJumpError(RuntimeError):
    """A click was applied to a state the jump operator annihilates."""


class PositivityError(RuntimeError):
    """Direct integration produced a non-positive density matrix."""


# ============================================================================
# Random Streams
# ============================================================================

STREAM_IDS = {"outcome": 0, "bath": 1, "policy": 2}


@dataclass(frozen=True)
class TrajectoryStreams:
    """Independent generators of one trajectory."""
    outcome: np.random.Generator
    bath: np.random.Generator
    policy: np.random.Generator


@dataclass(frozen=True)
class RngPolicy:
    """
    Counter-keyed Philox streams derived from one master seed.

    Each (sweep point, trajectory, purpose) owns a stream; within a stream
    every step consumes a fixed number of draws in a fixed order (one uniform
    for the outcome, an (n_w, n_channels) block of normals for the bath), so
    results never depend on scheduling.
    """
    master_seed: int

    def stream(self, purpose: str, point_index: int = 0, trajectory_index: int = 0) -> np.random.Generator:
        if purpose not in STREAM_IDS:
            raise ValueError(f"Unknown stream purpose: {purpose}")
        sequence = np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(point_index, trajectory_index, STREAM_IDS[purpose]),
        )
        return np.random.Generator(np.random.Philox(sequence))

    def trajectory_streams(self, point_index: int = 0, trajectory_index: int = 0) -> TrajectoryStreams:
        return TrajectoryStreams(
            outcome=self.stream("outcome", point_index, trajectory_index),
            bath=self.stream("bath", point_index, trajectory_index),
            policy=self.stream("policy", point_index, trajectory_index),
        )


# ============================================================================
# Data Models
# ============================================================================

@dataclass
class WalkerEnsemble:
    """Pure-state walkers (rows) sharing one measurement record."""
    walkers: np.ndarray

    def __post_init__(self):
        if self.walkers.ndim != 2 or self.walkers.shape[0] < 1:
            raise ValueError(f"Walker ensemble needs shape (n_w >= 1, dim), got {self.walkers.shape}")

    @classmethod
    def from_state(cls, psi: StateVector, n_walkers: int) -> "WalkerEnsemble":
        if n_walkers < 1:
            raise ValueError(f"n_walkers must be >= 1, got {n_walkers}")
        return cls(np.tile(linalg.normalize(np.asarray(psi, dtype=complex)), (n_walkers, 1)))

    @property
    def n_walkers(self) -> int:
        return self.walkers.shape[0]

    def density(self) -> Operator:
        return linalg.ensemble_density(self.walkers)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.walkers, axis=1)


@dataclass
class StepInputs:
    """Everything one stochastic step needs besides the state."""
    h0: Operator
    c_meas: Operator
    c_errors: np.ndarray
    xi: int
    bath_draws: np.ndarray
    error_kraus: Optional[Sequence[np.ndarray]] = None


@dataclass
class DensityTrajectory:
    """States and choices of a direct master-equation integration."""
    states: np.ndarray
    choices: List[int]
    outcomes: List[Outcome]


# ============================================================================
# Stochastic Schroedinger Step
# ============================================================================

def sse_step(psi: np.ndarray, inputs: StepInputs, dt: float) -> np.ndarray:
    """
    One step of the stochastic Schroedinger equation.

    Expectation values are taken per walker. The update combines the no-click
    drift and the click term (when xi = 1) with the error channels, either as
    the first-order dissipative drift plus Gaussian noise of every channel or,
    when ``inputs.error_kraus`` is set, as one exactly integrated Kraus branch
    per channel chosen by the bath draw. Each walker is renormalized.

    Args:
        psi: One walker (dim,) or a batch (n_w, dim)
        inputs: Operators, outcome and bath draws (n_w, n_channels)
        dt: Time step

    Returns:
        Updated walker(s) with the input shape

    Raises:
        NullJumpError: if xi = 1 and a walker has <c^dag c> below tolerance
    """
    single = psi.ndim == 1
    batch = np.atleast_2d(psi)
    n_walkers = batch.shape[0]
    c_errors = np.asarray(inputs.c_errors).reshape(-1, batch.shape[1], batch.shape[1])
    draws = np.asarray(inputs.bath_draws, dtype=float).reshape(n_walkers, c_errors.shape[0])

    c = inputs.c_meas
    k = c.conj().T @ c
    k_mean = linalg.expect_batch(batch, k).real

    update = -1j * dt * (batch @ inputs.h0.T) - 0.5 * dt * (batch @ k.T - k_mean[:, None] * batch)
    if inputs.xi == 1:
        if np.any(k_mean < TOLERANCE_CONFIG["null_jump"]):
            raise NullJumpError("Click drawn for a walker annihilated by the jump operator")
        update += (batch @ c.T) / np.sqrt(k_mean)[:, None] - batch

    if inputs.error_kraus is None:
        for channel, c_gamma in enumerate(c_errors):
            c_psi = batch @ c_gamma.T
            mean = np.einsum("wi,wi->w", batch.conj(), c_psi)
            cc_psi = batch @ (c_gamma.conj().T @ c_gamma).T
            update += dt * (mean.conj()[:, None] * c_psi - 0.5 * cc_psi - 0.5 * (np.abs(mean) ** 2)[:, None] * batch)
            update += np.sqrt(dt) * draws[:, channel, None] * (c_psi - mean[:, None] * batch)

    new = batch + update
    new /= np.linalg.norm(new, axis=1)[:, None]
    if inputs.error_kraus is not None:
        new = sample_error_branches(new, inputs.error_kraus, draws)
    return new[0] if single else new


def sample_error_branches(batch: np.ndarray, error_kraus: Sequence[np.ndarray], draws: np.ndarray) -> np.ndarray:
    """
    Apply every exactly integrated error channel to normalized walkers.

    Walker w takes branch a of channel g with probability |K_a psi_w|^2; the
    branch is picked by the normal quantile of draws[w, g], so the bath
    average over walkers is sum_a K_a rho K_a^dag for each channel.
    """
    rows = np.arange(batch.shape[0])
    quantiles = np.maximum(special.ndtr(draws), np.finfo(float).tiny)
    for channel, kraus in enumerate(error_kraus):
        branches = np.einsum("aij,wj->wai", kraus, batch)
        weights = np.einsum("wai,wai->wa", branches.conj(), branches).real
        cumulative = np.cumsum(weights, axis=1)
        cumulative /= cumulative[:, -1:]
        chosen = np.minimum((cumulative < quantiles[:, channel, None]).sum(axis=1), len(kraus) - 1)
        batch = branches[rows, chosen] / np.sqrt(weights[rows, chosen])[:, None]
    return batch


# ============================================================================
# Master-Equation Increments
# ============================================================================

def hamiltonian_increment(rho: Operator, h: np.ndarray, dt: float) -> np.ndarray:
    """-i dt [H, rho]; h may be a stack of Hamiltonians."""
    return -1j * dt * (h @ rho - rho @ h)


def dissipator(rho: Operator, c: Operator) -> Operator:
    """Lindblad superoperator D[c] rho."""
    cc = c.conj().T @ c
    return c @ rho @ c.conj().T - 0.5 * (cc @ rho + rho @ cc)


def error_increment(rho: Operator, c_errors: np.ndarray, dt: float) -> Operator:
    total = np.zeros_like(rho)
    for c_gamma in c_errors:
        total += dissipator(rho, c_gamma)
    return dt * total


def measurement_increment(rho: Operator, c: Operator, xi: int, dt: float) -> Operator:
    """No-click back-action plus, for xi = 1, the normalized click."""
    k = c.conj().T @ c
    k_mean = linalg.herm_expect(rho, k)
    increment = -0.5 * dt * (k @ rho + rho @ k - 2 * k_mean * rho)
    if xi == 1:
        if k_mean < TOLERANCE_CONFIG["null_jump"]:
            raise NullJumpError("Click outcome applied to a state annihilated by the jump operator")
        increment += c @ rho @ c.conj().T / k_mean - rho
    return increment


def sme_step(rho: Operator, outcome: Outcome, spec: ModelSpec, choice: SteeringChoice,
             dt: Optional[float] = None) -> Operator:
    """
    Increment d rho of the stochastic master equation for one outcome.

    Args:
        rho: Density matrix before the step
        outcome: Detector outcome (xi, eta)
        spec: Model parameters (jump operators carry sqrt(spec.dt))
        choice: Steering choice of this step
        dt: Time step of the explicit dt factors, defaults to spec.dt

    Returns:
        Commutator, measurement and Lindblad parts summed
    """
    dt = spec.dt if dt is None else dt
    ops = build_operators(spec)
    return (hamiltonian_increment(rho, ops.hamiltonians[choice_index(choice)], dt)
            + measurement_increment(rho, ops.jumps[outcome.eta], outcome.xi, dt)
            + error_increment(rho, ops.error_jumps, dt))


def apply_error_channels(rho: Operator, error_kraus: Sequence[np.ndarray]) -> Operator:
    """sum_a K_a rho K_a^dag for every channel in turn (the channels commute)."""
    for kraus in error_kraus:
        rho = np.einsum("aij,jk,alk->il", kraus, rho, kraus.conj())
    return rho


def kraus_update(rho: Operator, outcome: Outcome, ops: OperatorSet, index: int, dt: float) -> Operator:
    """
    Completely positive form of one master-equation step.

    rho' ~ B rho B^dag with B carrying the Hamiltonian, no-click and click
    parts, trace-normalized and followed by the exactly integrated error
    channels. Agrees with rho + sme_step to first order and with the bath
    average of the walker update at any gamma * dt.
    """
    c = ops.jumps[outcome.eta]
    k = ops.jump_norms[outcome.eta]
    k_mean = linalg.herm_expect(rho, k)
    eye = np.eye(ops.dim, dtype=complex)
    b = eye - 1j * dt * ops.hamiltonians[index] - 0.5 * dt * (k - k_mean * eye)
    if outcome.xi == 1:
        if k_mean < TOLERANCE_CONFIG["null_jump"]:
            raise NullJumpError("Click outcome applied to a state annihilated by the jump operator")
        b += c / np.sqrt(k_mean) - eye
    new = b @ rho @ b.conj().T
    error_kraus = ops.error_kraus if dt == ops.spec.dt else [channel_kraus(c_gamma, dt) for c_gamma in ops.error_jumps]
    new = apply_error_channels(new / np.trace(new).real, error_kraus)
    new = 0.5 * (new + new.conj().T)
    return new / np.trace(new).real


# ============================================================================
# Outcome Sampling
# ============================================================================

def _draw_outcome(rho_bar: Operator, spec: ModelSpec, rng: np.random.Generator) -> Outcome:
    table = outcome_probabilities(rho_bar, spec)
    u = rng.random()
    cumulative = 0.0
    last_possible = None
    for outcome, p in table.items():
        if p <= 0.0:
            continue
        cumulative += p
        last_possible = outcome
        if u < cumulative:
            return outcome
    return last_possible


def sample_outcome(ensemble: Union[WalkerEnsemble, np.ndarray], spec: ModelSpec, choice: SteeringChoice,
                   rng: np.random.Generator) -> Outcome:
    """
    Draw the shared outcome of the next step from the ensemble-average state.

    Outcomes with zero probability are never drawn.
    """
    walkers = ensemble.walkers if isinstance(ensemble, WalkerEnsemble) else np.atleast_2d(ensemble)
    return _draw_outcome(linalg.ensemble_density(walkers), spec, rng)


# ============================================================================
# Trajectories
# ============================================================================

def _error_kraus(ops: OperatorSet, error_scheme: Optional[str]) -> Optional[Sequence[np.ndarray]]:
    error_scheme = SIMULATION_CONFIG["error_scheme"] if error_scheme is None else error_scheme
    if error_scheme not in ERROR_SCHEMES:
        raise ValueError(f"Unknown error scheme: {error_scheme}")
    return ops.error_kraus if error_scheme == "kraus" else None


def evolve_trajectory(spec: ModelSpec, protocol, n_steps: int, rng: TrajectoryStreams,
                      n_walkers: Optional[int] = None, policy: str = "greedy",
                      snapshot_stride: Optional[int] = None, error_scheme: Optional[str] = None) -> TrajectoryRecord:
    """
    Run one measurement trajectory of an actively steered walker ensemble.

    Each step decides the steering from the ensemble-average state, samples
    the shared outcome, advances every walker and records diagnostics.

    Args:
        spec: Model parameters
        protocol: Steering protocol (initial state, target, observable, menu)
        n_steps: Number of steps
        rng: Streams of this trajectory
        n_walkers: Walkers per trajectory
        policy: "greedy" or "random" (uniform over the menu, state independent)
        snapshot_stride: Steps between stored ensemble-average states
        error_scheme: "kraus" or "diffusive" walker error channels

    Returns:
        TrajectoryRecord over steps 1..n_steps
    """
    from steering_core.steering import choose_steering, random_choice

    if policy not in POLICIES:
        raise ValueError(f"Unknown policy: {policy}")
    if n_steps < 0:
        raise ValueError(f"n_steps must be non-negative, got {n_steps}")
    n_walkers = SIMULATION_CONFIG["n_walkers"] if n_walkers is None else n_walkers
    stride = SIMULATION_CONFIG["snapshot_stride"] if snapshot_stride is None else snapshot_stride
    if stride < 1:
        raise ValueError(f"snapshot_stride must be >= 1, got {stride}")

    ops = build_operators(spec)
    error_kraus = _error_kraus(ops, error_scheme)
    ensemble = WalkerEnsemble.from_state(protocol.initial_state, n_walkers)
    walkers = ensemble.walkers
    references = list(protocol.reference_states.values())

    choices = np.zeros(n_steps, dtype=int)
    xis = np.zeros(n_steps, dtype=int)
    etas = np.zeros(n_steps, dtype=int)
    fidelities = np.zeros(n_steps)
    reference_fidelities = np.zeros((n_steps, len(references)))
    purities = np.zeros(n_steps)
    bloch = np.zeros((n_steps, 3)) if spec.n_qubits == 1 else None
    snapshot_steps, snapshots = [], []

    rho_bar = linalg.ensemble_density(walkers)
    for step in range(n_steps):
        if policy == "greedy":
            choice = choose_steering(rho_bar, protocol, spec)
        else:
            choice = random_choice(protocol, rng.policy)
        index = choice_index(choice)
        outcome = _draw_outcome(rho_bar, spec, rng.outcome)
        draws = rng.bath.standard_normal((n_walkers, ops.n_channels))

        inputs = StepInputs(h0=ops.hamiltonians[index], c_meas=ops.jumps[outcome.eta],
                            c_errors=ops.error_jumps, xi=outcome.xi, bath_draws=draws, error_kraus=error_kraus)
        walkers = sse_step(walkers, inputs, spec.dt)
        rho_bar = linalg.ensemble_density(walkers)

        choices[step], xis[step], etas[step] = index, outcome.xi, outcome.eta
        fidelities[step] = fidelity(rho_bar, protocol.target_state)
        reference_fidelities[step] = [fidelity(rho_bar, ref) for ref in references]
        purities[step] = purity(rho_bar)
        if bloch is not None:
            bloch[step] = bloch_vector(rho_bar)
        if (step + 1) % stride == 0 or step == n_steps - 1:
            snapshot_steps.append(step + 1)
            snapshots.append(rho_bar)

    return TrajectoryRecord(
        n_qubits=spec.n_qubits,
        dt=spec.dt,
        choices=choices,
        xi=xis,
        eta=etas,
        fidelity=fidelities,
        reference_fidelities=reference_fidelities,
        reference_labels=tuple(protocol.reference_states),
        purity=purities,
        snapshot_steps=np.array(snapshot_steps, dtype=int),
        snapshots=np.array(snapshots).reshape(-1, spec.dim, spec.dim),
        bloch=bloch,
    )


def sme_integrate(spec: ModelSpec, protocol, outcome_sequence: Sequence[Outcome],
                  n_steps: Optional[int] = None, choices: Optional[Sequence[SteeringChoice]] = None,
                  scheme: Optional[str] = None, initial_rho: Optional[Operator] = None) -> DensityTrajectory:
    """
    Integrate the stochastic master equation directly for a fixed outcome record.

    Decisions are greedy on the integrated state unless ``choices`` fixes
    them. The "kraus" scheme steps in completely positive form; "euler" adds
    the literal increment and is only positive for small enough dt.

    Raises:
        PositivityError: if an eigenvalue drops below the positivity tolerance
    """
    from steering_core.steering import choose_steering

    scheme = SIMULATION_CONFIG["sme_scheme"] if scheme is None else scheme
    if scheme not in SME_SCHEMES:
        raise ValueError(f"Unknown integration scheme: {scheme}")
    n_steps = len(outcome_sequence) if n_steps is None else n_steps
    if n_steps > len(outcome_sequence) or (choices is not None and n_steps > len(choices)):
        raise ValueError(f"Outcome/choice sequences shorter than {n_steps} steps")

    ops = build_operators(spec)
    rho = linalg.outer(protocol.initial_state) if initial_rho is None else np.array(initial_rho, dtype=complex)
    states = np.zeros((n_steps + 1, spec.dim, spec.dim), dtype=complex)
    states[0] = rho
    indices, used = [], []
    for step in range(n_steps):
        choice = choices[step] if choices is not None else choose_steering(rho, protocol, spec)
        index = choice_index(choice)
        outcome = Outcome(*outcome_sequence[step])
        if scheme == "kraus":
            rho = kraus_update(rho, outcome, ops, index, spec.dt)
        else:
            rho = rho + sme_step(rho, outcome, spec, choice)
        smallest = linalg.eigvals_hermitian(0.5 * (rho + rho.conj().T))[0]
        if smallest < -TOLERANCE_CONFIG["positivity"]:
            raise PositivityError(f"Eigenvalue {smallest:.3e} at step {step + 1}; reduce dt")
        states[step + 1] = rho
        indices.append(index)
        used.append(outcome)
    return DensityTrajectory(states=states, choices=indices, outcomes=used)


def replay_ensemble(spec: ModelSpec, initial_state: StateVector, outcome_sequence: Sequence[Outcome],
                    choices: Sequence[int], n_walkers: int, bath_rng: np.random.Generator,
                    error_scheme: Optional[str] = None) -> np.ndarray:
    """
    Walker-ensemble averages under a fixed outcome and choice record.

    Args:
        choices: Flat steering indices per step

    Returns:
        Ensemble-average states, shape (n_steps + 1, dim, dim)
    """
    ops = build_operators(spec)
    error_kraus = _error_kraus(ops, error_scheme)
    walkers = WalkerEnsemble.from_state(initial_state, n_walkers).walkers
    states = np.zeros((len(choices) + 1, spec.dim, spec.dim), dtype=complex)
    states[0] = linalg.ensemble_density(walkers)
    for step, index in enumerate(choices):
        outcome = Outcome(*outcome_sequence[step])
        draws = bath_rng.standard_normal((n_walkers, ops.n_channels))
        inputs = StepInputs(h0=ops.hamiltonians[index], c_meas=ops.jumps[outcome.eta],
                            c_errors=ops.error_jumps, xi=outcome.xi, bath_draws=draws, error_kraus=error_kraus)
        walkers = sse_step(walkers, inputs, spec.dt)
        states[step + 1] = linalg.ensemble_density(walkers)
    return states

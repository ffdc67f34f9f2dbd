"""
Dense complex linear algebra for one and two qubits.

Thin, dimension-checked wrappers over numpy. Every operator in the engine is
a complex128 array of shape (2, 2) or (4, 4); two-qubit operators are built
through ``kron`` only, with qubit 1 in the left (most significant) slot.

Basis convention: |0> = (1, 0) with sigma_z |0> = +|0>; sigma_minus maps
|0> to |1>.
"""

from typing import Optional

import numpy as np

from steering_core.core_config import TOLERANCE_CONFIG

Operator = np.ndarray
StateVector = np.ndarray

SUPPORTED_DIMS = (2, 4)

IDENTITY_2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.T.copy()
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)

for _m in (IDENTITY_2, SIGMA_X, SIGMA_Y, SIGMA_Z, SIGMA_MINUS, SIGMA_PLUS):
    _m.setflags(write=False)


class DimensionError(ValueError):
    """Operands do not have compatible one- or two-qubit shapes."""


class HermiticityError(ValueError):
    """Tr(rho A) has an imaginary part above tolerance."""


def _require_operator(a: Operator, dims=SUPPORTED_DIMS) -> int:
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] not in dims:
        raise DimensionError(f"Expected a square operator of dimension {dims}, got shape {a.shape}")
    return a.shape[0]


def _require_same(a: Operator, b: Operator) -> int:
    dim = _require_operator(a)
    if _require_operator(b) != dim:
        raise DimensionError(f"Dimension mismatch: {a.shape} vs {b.shape}")
    return dim


def _require_state(psi: StateVector) -> int:
    if psi.ndim != 1 or psi.shape[0] not in SUPPORTED_DIMS:
        raise DimensionError(f"Expected a state vector of dimension {SUPPORTED_DIMS}, got shape {psi.shape}")
    return psi.shape[0]


# ============================================================================
# Basic Operations
# ============================================================================

def kron(a: Operator, b: Operator) -> Operator:
    """Tensor product of two single-qubit operators, qubit 1 first."""
    _require_operator(a, dims=(2,))
    _require_operator(b, dims=(2,))
    return np.kron(a, b)


def herm_expect(rho: Operator, a: Operator) -> float:
    """
    Expectation value Tr(rho a) of a Hermitian operator.

    Args:
        rho: Density matrix
        a: Hermitian observable of the same dimension

    Returns:
        Real expectation value

    Raises:
        HermiticityError: if the imaginary residue exceeds tolerance
    """
    _require_same(rho, a)
    value = np.einsum("ij,ji->", rho, a)
    if abs(value.imag) > TOLERANCE_CONFIG["imaginary_residue"]:
        raise HermiticityError(f"Tr(rho A) has imaginary part {value.imag:.3e}; operator is not Hermitian")
    return float(value.real)


def outer(psi: StateVector, phi: Optional[StateVector] = None) -> Operator:
    """|psi><phi|, or the projector |psi><psi| when phi is omitted."""
    _require_state(psi)
    if phi is None:
        phi = psi
    elif _require_state(phi) != psi.shape[0]:
        raise DimensionError(f"Dimension mismatch: {psi.shape} vs {phi.shape}")
    return np.outer(psi, phi.conj())


def add(a: Operator, b: Operator) -> Operator:
    _require_same(a, b)
    return a + b


def scale(a: Operator, factor: complex) -> Operator:
    _require_operator(a)
    return factor * a


def matmul(a: Operator, b: Operator) -> Operator:
    _require_same(a, b)
    return a @ b


def dagger(a: Operator) -> Operator:
    _require_operator(a)
    return a.conj().T


def trace(a: Operator) -> complex:
    _require_operator(a)
    return complex(np.trace(a))


def eigvals_hermitian(a: Operator) -> np.ndarray:
    """Eigenvalues of a Hermitian operator in ascending order."""
    _require_operator(a)
    return np.linalg.eigvalsh(a)


# ============================================================================
# States and Density Matrices
# ============================================================================

def normalize(psi: StateVector) -> StateVector:
    _require_state(psi)
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError("Cannot normalize the zero vector")
    return psi / norm


def is_hermitian(a: Operator, atol: Optional[float] = None) -> bool:
    _require_operator(a)
    atol = TOLERANCE_CONFIG["algebraic"] if atol is None else atol
    return bool(np.allclose(a, a.conj().T, rtol=0.0, atol=atol))


def check_density_matrix(rho: Operator, eigenvalue_tol: Optional[float] = None) -> None:
    """
    Validate the density-matrix invariants.

    Raises:
        ValueError: naming the first violated invariant
    """
    _require_operator(rho)
    if not is_hermitian(rho, atol=TOLERANCE_CONFIG["trace"]):
        raise ValueError("Density matrix is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TOLERANCE_CONFIG["trace"]:
        raise ValueError(f"Density matrix trace is {tr!r}, expected 1")
    eigenvalue_tol = TOLERANCE_CONFIG["eigenvalue"] if eigenvalue_tol is None else eigenvalue_tol
    smallest = np.linalg.eigvalsh(rho)[0]
    if smallest < -eigenvalue_tol:
        raise ValueError(f"Density matrix has negative eigenvalue {smallest:.3e}")


def embed(op: Operator, qubit: int, n_qubits: int) -> Operator:
    """
    Embed a single-qubit operator into the N-qubit space.

    Args:
        op: 2x2 operator
        qubit: Target qubit, 0 for qubit 1 and 1 for qubit 2
        n_qubits: 1 or 2

    Returns:
        Operator of dimension 2**n_qubits
    """
    _require_operator(op, dims=(2,))
    if n_qubits == 1:
        if qubit != 0:
            raise ValueError(f"Qubit index {qubit} out of range for one qubit")
        return op.copy()
    if n_qubits != 2 or qubit not in (0, 1):
        raise ValueError(f"Unsupported embedding: qubit {qubit} of {n_qubits}")
    return kron(op, IDENTITY_2) if qubit == 0 else kron(IDENTITY_2, op)


def identity(n_qubits: int) -> Operator:
    return np.eye(2 ** n_qubits, dtype=complex)


# ============================================================================
# Walker Batches
# ============================================================================

def expect_batch(psi: np.ndarray, a: Operator) -> np.ndarray:
    """<psi_w|a|psi_w> for every walker row of psi (shape (n_w, dim))."""
    if psi.ndim != 2 or _require_operator(a) != psi.shape[1]:
        raise DimensionError(f"Walker batch {psi.shape} incompatible with operator {a.shape}")
    return np.einsum("wi,ij,wj->w", psi.conj(), a, psi)


def ensemble_density(psi: np.ndarray) -> Operator:
    """Walker-average density matrix (1/n_w) sum_w |psi_w><psi_w|."""
    if psi.ndim == 1:
        return outer(psi)
    if psi.ndim != 2 or psi.shape[1] not in SUPPORTED_DIMS or psi.shape[0] == 0:
        raise DimensionError(f"Expected a walker batch (n_w, dim), got shape {psi.shape}")
    return psi.T @ psi.conj() / psi.shape[0]

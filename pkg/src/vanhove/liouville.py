"""Superoperator algebra on a bipartite system-bath Hilbert space.

Operators are dense complex matrices. Superoperators act on operators that
have been flattened by column stacking, so that ``vec(A X B) = (B.T kron A) vec(X)``.
The system factor always comes first in tensor products.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import expm

TOL_HERM = 1e-10
TOL_TRACE = 1e-10
TOL_POS = 1e-8
TOL_PROJ = 1e-10
DENSE_EXP_CAP = 4096


@dataclass(frozen=True)
class CompositeDims:
    d_S: int
    d_B: int

    def __post_init__(self):
        if self.d_S < 2 or self.d_B < 1:
            raise ValueError(f"invalid composite dimensions d_S={self.d_S}, d_B={self.d_B}")

    @property
    def D(self) -> int:
        return self.d_S * self.d_B


def _square(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return A


def vectorize(A: np.ndarray) -> np.ndarray:
    """Column-stack a square matrix into a vector."""
    return _square(A).reshape(-1, order="F").astype(complex)


def devectorize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size or v.ndim != 1:
        raise ValueError(f"vector of length {v.size} is not a flattened square matrix")
    return v.reshape(d, d, order="F")


def is_hermitian(A: np.ndarray, tol: float = TOL_HERM) -> bool:
    return bool(np.max(np.abs(A - A.conj().T), initial=0.0) <= tol * max(1.0, np.max(np.abs(A), initial=0.0)))


def require_hermitian(H: np.ndarray, name: str = "H") -> np.ndarray:
    H = _square(H)
    if not is_hermitian(H):
        raise ValueError(f"{name} is not Hermitian within tolerance {TOL_HERM}")
    return H


def check_density_matrix(rho: np.ndarray, name: str = "rho") -> None:
    """Raise ``ValueError`` if ``rho`` is not a valid density matrix."""
    rho = _square(rho)
    if not is_hermitian(rho):
        raise ValueError(f"{name} is not Hermitian")
    if abs(np.trace(rho) - 1.0) > TOL_TRACE:
        raise ValueError(f"{name} has trace {np.trace(rho).real:.3e}, expected 1")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lo < -TOL_POS:
        raise ValueError(f"{name} has negative eigenvalue {lo:.3e}")


def commutator_superop(H: np.ndarray) -> np.ndarray:
    """Matrix of X -> H X - X H."""
    H = _square(H)
    eye = np.eye(H.shape[0])
    return np.kron(eye, H) - np.kron(H.T, eye)


def hamiltonian_liouvillian(H: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> -i [H, rho]."""
    return -1j * commutator_superop(require_hermitian(H))


def lift_system(A: np.ndarray, dims: CompositeDims) -> np.ndarray:
    A = _square(A)
    if A.shape[0] != dims.d_S:
        raise ValueError(f"system operator has dimension {A.shape[0]}, expected {dims.d_S}")
    return np.kron(A, np.eye(dims.d_B))


def lift_bath(B: np.ndarray, dims: CompositeDims) -> np.ndarray:
    B = _square(B)
    if B.shape[0] != dims.d_B:
        raise ValueError(f"bath operator has dimension {B.shape[0]}, expected {dims.d_B}")
    return np.kron(np.eye(dims.d_S), B)


def lift_superop_system(M: np.ndarray, dims: CompositeDims) -> np.ndarray:
    """Dilate a superoperator on system operators to the composite space."""
    M = np.asarray(M)
    d, e = dims.d_S, dims.d_B
    if M.shape != (d * d, d * d):
        raise ValueError(f"system superoperator has shape {M.shape}")
    # vec index of X[(i,a),(j,b)] is (j*e + b)*D + i*e + a, i.e. axes [j, b, i, a]
    T = M.reshape(d, d, d, d)
    eye = np.eye(e)
    out = np.einsum("jilk,bd,ac->jbialdkc", T, eye, eye)
    n = d * e
    return out.reshape(n * n, n * n)


def lift_superop_bath(M: np.ndarray, dims: CompositeDims) -> np.ndarray:
    M = np.asarray(M)
    d, e = dims.d_S, dims.d_B
    if M.shape != (e * e, e * e):
        raise ValueError(f"bath superoperator has shape {M.shape}")
    T = M.reshape(e, e, e, e)
    eye = np.eye(d)
    out = np.einsum("banm,jl,ik->jbialnkm", T, eye, eye)
    n = d * e
    return out.reshape(n * n, n * n)


def partial_trace_bath(rho: np.ndarray, dims: CompositeDims) -> np.ndarray:
    if dims is None:
        raise ValueError("partial trace needs composite dimensions")
    rho = _square(rho)
    if rho.shape[0] != dims.D:
        raise ValueError(f"operator dimension {rho.shape[0]} does not match D={dims.D}")
    return np.einsum("iaja->ij", rho.reshape(dims.d_S, dims.d_B, dims.d_S, dims.d_B))


def partial_trace_system(rho: np.ndarray, dims: CompositeDims) -> np.ndarray:
    rho = _square(rho)
    return np.einsum("iaib->ab", rho.reshape(dims.d_S, dims.d_B, dims.d_S, dims.d_B))


def trace_norm(A: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(A, compute_uv=False)))


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * trace_norm(np.asarray(a) - np.asarray(b))


class UnitaryPropagator:
    """Exact evolution under a fixed Hamiltonian, diagonalized once."""

    def __init__(self, H: np.ndarray):
        self.H = require_hermitian(H)
        self.energies, self.vectors = np.linalg.eigh(0.5 * (self.H + self.H.conj().T))

    def to_eigenbasis(self, X: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ X @ self.vectors

    def from_eigenbasis(self, X: np.ndarray) -> np.ndarray:
        return self.vectors @ X @ self.vectors.conj().T

    @cached_property
    def gaps(self) -> np.ndarray:
        return self.energies[:, None] - self.energies[None, :]

    def evolve(self, rho: np.ndarray, t: float) -> np.ndarray:
        phase = np.exp(-1j * t * self.gaps)
        return self.from_eigenbasis(phase * self.to_eigenbasis(rho))

    def evolve_many(self, rho: np.ndarray, times) -> np.ndarray:
        """Stack of evolved states, shape (len(times), D, D)."""
        rho_e = self.to_eigenbasis(rho)
        times = np.asarray(times, dtype=float)
        phases = np.exp(-1j * times[:, None, None] * self.gaps[None])
        return self.vectors @ (phases * rho_e) @ self.vectors.conj().T


def propagate_unitary(H: np.ndarray, rho: np.ndarray, t: float) -> np.ndarray:
    """rho(t) = exp(-iHt) rho exp(iHt)."""
    return UnitaryPropagator(H).evolve(rho, t)


def apply_superop_exp(M: np.ndarray, rho: np.ndarray, t: float, cap: int = DENSE_EXP_CAP) -> np.ndarray:
    """exp(M t) applied to a vectorized operator, for superoperators below the size cap."""
    M = np.asarray(M)
    if M.shape[0] > cap:
        raise ValueError(
            f"superoperator dimension {M.shape[0]} exceeds dense exponential cap {cap}; "
            "use the unitary or quadrature route"
        )
    return devectorize(expm(M * t) @ vectorize(rho))

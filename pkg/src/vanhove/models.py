"""System-plus-bath models: total Hamiltonians, a reference qubit model, random small models."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .baths import BathModel, build_quasicontinuum_bath, gibbs_state
from .liouville import CompositeDims, require_hermitian

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


@dataclass
class OpenSystemModel:
    """H = H_S + H_B + lam * sum_i A_i kron B_i on system-first tensor products."""

    H_S: np.ndarray
    bath: BathModel
    system_ops: list

    def __post_init__(self):
        require_hermitian(self.H_S, "H_S")
        if len(self.system_ops) != len(self.bath.couplings):
            raise ValueError("each bath coupling operator needs a system partner")

    @property
    def dims(self) -> CompositeDims:
        return CompositeDims(self.H_S.shape[0], self.bath.d_B)

    @property
    def omega_B(self) -> np.ndarray:
        return self.bath.omega_B

    @property
    def H_free(self) -> np.ndarray:
        d_S, d_B = self.dims.d_S, self.dims.d_B
        return np.kron(self.H_S, np.eye(d_B)) + np.kron(np.eye(d_S), self.bath.H_B)

    @property
    def H_int(self) -> np.ndarray:
        return sum(np.kron(A, B) for A, B in zip(self.system_ops, self.bath.couplings))

    def hamiltonian(self, lam: float) -> np.ndarray:
        return self.H_free + lam * self.H_int

    def recentred(self, omega_B: np.ndarray) -> "OpenSystemModel":
        """Copy whose bath couplings have zero mean in ``omega_B`` (same bath Hamiltonian)."""
        eye = np.eye(self.bath.d_B)
        couplings = [B - np.trace(B @ omega_B) * eye for B in self.bath.couplings]
        return OpenSystemModel(self.H_S, replace(self.bath, couplings=couplings), self.system_ops)

    def with_bath_size(self, n_modes: int) -> "OpenSystemModel":
        """Same physical parameters with a different number of bath modes."""
        b = self.bath
        nb = build_quasicontinuum_bath(n_modes, b.meta["band"], b.shape, b.beta,
                                       b.meta["strength"], b.meta.get("cutoff", 1.0))
        return OpenSystemModel(self.H_S, nb, self.system_ops)


def reference_qubit_model(n_modes: int = 256, splitting: float = 1.0, band=(0.5, 1.5),
                          beta: float = np.inf, strength: float = 0.1, shape: str = "flat") -> OpenSystemModel:
    """Qubit (splitting/2) sigma_z coupled through sigma_x to a single-excitation band.

    The default bath is at zero temperature: its vacuum is the mixing reference
    state. With an even mode count the splitting falls between two bath levels.
    """
    bath = build_quasicontinuum_bath(n_modes, tuple(band), shape, beta, strength)
    return OpenSystemModel(0.5 * splitting * SIGMA_Z, bath, [SIGMA_X])


def random_hermitian(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (a + a.conj().T)


def random_admissible_model(rng: np.random.Generator, d_S: int | None = None,
                            d_B: int | None = None) -> OpenSystemModel:
    """Small random model with a thermal, stationary reference state and centred coupling."""
    d_S = int(rng.integers(2, 5)) if d_S is None else d_S
    d_B = int(rng.integers(2, 6)) if d_B is None else d_B
    H_S = random_hermitian(rng, d_S)
    levels = np.sort(rng.uniform(0.0, 3.0, d_B))
    basis, _ = np.linalg.qr(rng.normal(size=(d_B, d_B)) + 1j * rng.normal(size=(d_B, d_B)))
    H_B = basis @ np.diag(levels) @ basis.conj().T
    H_B = 0.5 * (H_B + H_B.conj().T)
    omega = gibbs_state(H_B, float(rng.uniform(0.2, 2.0)))
    B = random_hermitian(rng, d_B)
    B = B - np.trace(B @ omega) * np.eye(d_B)
    bath = BathModel(H_B, omega, [B], levels, np.ones(d_B), beta=float("nan"), shape="random")
    return OpenSystemModel(H_S, bath, [random_hermitian(rng, d_S)])

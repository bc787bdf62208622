"""Spectral decompositions: Bohr frequencies, the stationary projection, dephasing averages."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .liouville import (
    require_hermitian,
    check_density_matrix,
)


def _cluster(values: np.ndarray, tol: float) -> list[np.ndarray]:
    """Group sorted values into runs whose neighbours differ by at most ``tol``."""
    order = np.argsort(values)
    groups, current = [], [order[0]]
    for a, b in zip(order[:-1], order[1:]):
        if values[b] - values[a] <= tol:
            current.append(b)
        else:
            groups.append(np.array(current))
            current = [b]
    groups.append(np.array(current))
    for g in groups:
        spread = np.ptp(values[g])
        if spread > tol and spread < 10 * tol:
            warnings.warn(f"ill-conditioned clustering: spread {spread:.2e} vs tolerance {tol:.2e}")
    return groups


@dataclass
class BohrDecomposition:
    """Resolution of the free system Liouvillian into Bohr-frequency projectors.

    ``projectors[m]`` is the superoperator (column-stacking convention) of
    X -> sum over E_i - E_j = frequencies[m] of Q_i X Q_j.
    """

    frequencies: np.ndarray
    projectors: list
    energies: np.ndarray
    eigenprojections: list
    merge_tol: float

    def __len__(self):
        return len(self.frequencies)

    def index_of(self, omega: float) -> int:
        m = int(np.argmin(np.abs(self.frequencies - omega)))
        if abs(self.frequencies[m] - omega) > max(self.merge_tol, 1e-12):
            raise KeyError(f"no Bohr frequency at {omega}")
        return m

    def liouvillian(self) -> np.ndarray:
        return -1j * sum(w * Qm for w, Qm in zip(self.frequencies, self.projectors))

    def project(self, m: int, X: np.ndarray) -> np.ndarray:
        """Apply the m-th projector to a system operator (or a stack of them)."""
        out = np.zeros_like(X, dtype=complex)
        for i, j in self._pairs[m]:
            out = out + self.eigenprojections[i] @ X @ self.eigenprojections[j]
        return out

    def __post_init__(self):
        self._pairs = [[] for _ in self.frequencies]
        for i, Ei in enumerate(self.energies):
            for j, Ej in enumerate(self.energies):
                self._pairs[self.index_of(Ei - Ej)].append((i, j))


def bohr_decomposition(H_S: np.ndarray, merge_tol: float | None = None) -> BohrDecomposition:
    H_S = require_hermitian(H_S, "H_S")
    if merge_tol is None:
        merge_tol = 1e-9 * max(np.linalg.norm(H_S, 2), 1.0)
    evals, evecs = np.linalg.eigh(H_S)
    levels, projections = [], []
    for g in _cluster(evals, merge_tol):
        levels.append(float(np.mean(evals[g])))
        V = evecs[:, g]
        projections.append(V @ V.conj().T)
    levels = np.array(levels)
    diffs = (levels[:, None] - levels[None, :]).ravel()
    freqs = np.array([float(np.mean(diffs[g])) for g in _cluster(diffs, merge_tol)])
    freqs.sort()
    supers = [np.zeros((H_S.shape[0] ** 2,) * 2, dtype=complex) for _ in freqs]
    for i, Ei in enumerate(levels):
        for j, Ej in enumerate(levels):
            m = int(np.argmin(np.abs(freqs - (Ei - Ej))))
            supers[m] += np.kron(projections[j].T, projections[i])
    return BohrDecomposition(freqs, supers, levels, projections, merge_tol)


@dataclass
class BathEigenstructure:
    energies: np.ndarray
    projections: list

    @property
    def dimension(self) -> int:
        return self.projections[0].shape[0]

    @property
    def min_gap(self) -> float:
        return float(np.min(np.diff(self.energies))) if len(self.energies) > 1 else np.inf


def bath_eigenstructure(H_B: np.ndarray, tol: float | None = None) -> BathEigenstructure:
    H_B = require_hermitian(H_B, "H_B")
    if tol is None:
        tol = 1e-9 * max(np.linalg.norm(H_B, 2), 1.0)
    evals, evecs = np.linalg.eigh(H_B)
    energies, projs = [], []
    for g in _cluster(evals, tol):
        energies.append(float(np.mean(evals[g])))
        V = evecs[:, g]
        projs.append(V @ V.conj().T)
    return BathEigenstructure(np.array(energies), projs)


def stationarity_defect(H_B: np.ndarray, omega_B: np.ndarray) -> float:
    return float(np.linalg.norm(H_B @ omega_B - omega_B @ H_B))


def stationarity_tolerance(H_B: np.ndarray) -> float:
    return 1e-10 * max(np.linalg.norm(H_B, 2), 1.0)


def zero_eigenprojection(omega_B: np.ndarray, d_S: int, H_B: np.ndarray | None = None,
                         allow_nonstationary: bool = False) -> np.ndarray:
    """Superoperator of rho -> tr_B(rho) kron omega_B on the composite space.

    If ``H_B`` is given the reference state must commute with it, unless
    ``allow_nonstationary`` is set.
    """
    check_density_matrix(omega_B, "omega_B")
    d_B = omega_B.shape[0]
    if H_B is not None and not allow_nonstationary:
        defect = stationarity_defect(H_B, omega_B)
        if defect > stationarity_tolerance(H_B):
            raise ValueError(f"reference state is not stationary: ||[H_B, omega_B]|| = {defect:.3e}")
    eye_S = np.eye(d_S)
    # vec axes are [col_S, col_B, row_S, row_B]; P[(j,b,i,a),(l,n,k,m)] = delta_jl delta_ik omega[a,b] delta_mn
    P = np.einsum("jl,ik,ab,mn->jbialnkm", eye_S, eye_S, omega_B, np.eye(d_B))
    D = d_S * d_B
    return P.reshape(D * D, D * D)


def diagonal_projection(rho: np.ndarray, bath: BathEigenstructure, d_S: int) -> np.ndarray:
    """sum over bath eigenprojections P_mu of (1 kron P_mu) rho (1 kron P_mu)."""
    rho = np.asarray(rho)
    if rho.shape[0] != d_S * bath.dimension:
        raise ValueError("state dimension does not match the bath eigenstructure")
    out = np.zeros_like(rho, dtype=complex)
    eye = np.eye(d_S)
    for Pm in bath.projections:
        L = np.kron(eye, Pm)
        out += L @ rho @ L
    return out


def cesaro_average(H_B: np.ndarray, rho: np.ndarray, T: float, n_samples: int = 257,
                   d_S: int = 1) -> np.ndarray:
    """Trapezoid estimate of (1/T) times the integral over [0, T] of the bath-evolved state."""
    if T <= 0:
        raise ValueError("horizon must be positive")
    if n_samples < 64:
        raise ValueError("at least 64 quadrature samples are required")
    H_B = require_hermitian(H_B, "H_B")
    E, V = np.linalg.eigh(H_B)
    U = np.kron(np.eye(d_S), V)
    E_full = np.tile(E, d_S)
    rho_e = U.conj().T @ rho @ U
    gaps = E_full[:, None] - E_full[None, :]
    t = np.linspace(0.0, T, n_samples)
    phases = np.exp(-1j * t[:, None, None] * gaps[None])
    avg = trapezoid(phases, t, axis=0) / T
    return U @ (avg * rho_e) @ U.conj().T


def check_mixing_proxy(H_B: np.ndarray, omega_B: np.ndarray, X: np.ndarray, Y: np.ndarray,
                       t_grid) -> np.ndarray:
    """C(t) = tr{X exp(L_B t)(Y omega_B)} - tr{X omega_B} tr{Y omega_B} on a time grid."""
    E, V = np.linalg.eigh(require_hermitian(H_B, "H_B"))
    Xe = V.conj().T @ X @ V
    Ye = V.conj().T @ (Y @ omega_B) @ V
    gaps = E[:, None] - E[None, :]
    t = np.asarray(t_grid, dtype=float)
    # tr{X e^{-iHt} Z e^{iHt}} = sum_ab X_ba Z_ab e^{-i(E_a - E_b)t}
    weights = Xe.T * Ye
    corr = np.einsum("ab,tab->t", weights, np.exp(-1j * t[:, None, None] * gaps[None]))
    return corr - np.trace(X @ omega_B) * np.trace(Y @ omega_B)


"""Finite bath surrogates: thermal states, quasi-continuum bands, correlated initial states."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .liouville import (
    TOL_POS,
    CompositeDims,
    partial_trace_bath,
    partial_trace_system,
    require_hermitian,
    trace_norm,
)
from .spectral import stationarity_defect


def gibbs_state(H: np.ndarray, beta: float) -> np.ndarray:
    """Normalized exp(-beta H); ``beta = np.inf`` gives the normalized ground projector."""
    H = require_hermitian(H)
    if beta < 0 or np.isnan(beta):
        raise ValueError("inverse temperature must be non-negative")
    E, V = np.linalg.eigh(H)
    shifted = E - E[0]
    if np.isinf(beta):
        w = (shifted <= 1e-9 * max(1.0, abs(E).max())).astype(float)
    else:
        w = np.exp(-beta * shifted)
    w /= w.sum()
    return (V * w) @ V.conj().T


def spectral_density(shape: str, omega: np.ndarray, strength: float, cutoff: float = 1.0) -> np.ndarray:
    if shape == "flat":
        return np.full_like(omega, strength, dtype=float)
    if shape == "ohmic":
        return strength * omega / cutoff * np.exp(-omega / cutoff)
    raise ValueError(f"unknown spectral density shape {shape!r}")


@dataclass
class BathModel:
    """A finite bath: Hamiltonian, reference state and coupling operators.

    In the single-excitation builds, basis state 0 is the bath vacuum and
    state k >= 1 carries one quantum in mode k.
    """

    H_B: np.ndarray
    omega_B: np.ndarray
    couplings: list
    mode_energies: np.ndarray
    mode_weights: np.ndarray
    beta: float
    beta2: float | None = None
    shape: str = "flat"
    meta: dict = field(default_factory=dict)

    @property
    def d_B(self) -> int:
        return self.H_B.shape[0]

    @property
    def n_modes(self) -> int:
        return len(self.mode_energies)

    @property
    def delta_omega(self) -> float:
        return float(np.min(np.diff(np.sort(self.mode_energies))))

    @property
    def bandwidth(self) -> float:
        return float(np.ptp(self.mode_energies))

    @property
    def recurrence_time(self) -> float:
        return 2 * np.pi / self.delta_omega

    def field_operator(self, profile: np.ndarray) -> np.ndarray:
        """b(f) + b(f)^dagger restricted to the vacuum plus single-excitation space."""
        f = np.zeros(self.d_B, dtype=complex)
        f[1:] = profile
        X = np.zeros((self.d_B, self.d_B), dtype=complex)
        X[0, :] = f.conj()
        X[:, 0] += f
        return X

    def hopping_operator(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """b(f)^dagger b(g) + h.c. restricted to the single-excitation space."""
        X = np.zeros((self.d_B, self.d_B), dtype=complex)
        M = np.outer(f, np.conj(g))
        X[1:, 1:] = M + M.conj().T
        return X


def _centred(B: np.ndarray, omega_B: np.ndarray) -> np.ndarray:
    return B - np.trace(B @ omega_B) * np.eye(B.shape[0])


def build_quasicontinuum_bath(n_modes: int, band: tuple[float, float], shape: str = "flat",
                              beta: float = np.inf, strength: float = 0.1, cutoff: float = 1.0,
                              single_excitation: bool = True, min_modes: int = 16) -> BathModel:
    """Equally spaced modes across ``band``, coupled to the system through a field operator.

    The coupling operator is sum_k g_k (|0><k| + |k><0|) with g_k^2 = J(omega_k) * spacing.
    """
    if not single_excitation:
        raise ValueError("only the single-excitation build is available for large mode counts; "
                         "use the Fock-space tools in vanhove.gaussian for few-mode baths")
    if n_modes < 2:
        raise ValueError("need at least two modes")
    lo, hi = band
    energies = np.linspace(lo, hi, n_modes)
    spacing = (hi - lo) / (n_modes - 1)
    weights = np.sqrt(spectral_density(shape, energies, strength, cutoff) * spacing)
    H_B = np.diag(np.concatenate([[0.0], energies])).astype(complex)
    omega_B = gibbs_state(H_B, beta)
    model = BathModel(H_B, omega_B, [], energies, weights, beta, shape=shape,
                      meta={"band": (lo, hi), "strength": strength, "cutoff": cutoff})
    model.couplings = [_centred(model.field_operator(weights), omega_B)]
    if n_modes < min_modes:
        warnings.warn(f"{n_modes} modes is below the recommended {min_modes}; "
                      f"recurrence time is {model.recurrence_time:.3g}")
    return model


def build_two_temperature_bath(n1: int, beta1: float, n2: int, beta2: float,
                               band1: tuple[float, float], band2: tuple[float, float] | None = None,
                               shape: str = "flat", strength: float = 0.1) -> BathModel:
    """Two sub-reservoirs sharing the vacuum, each populated at its own temperature.

    The reference state is the single-excitation truncation of the product of
    the two Gibbs states, so it is diagonal and stationary.
    """
    band2 = band1 if band2 is None else band2
    e1 = np.linspace(*band1, n1)
    e2 = np.linspace(*band2, n2)
    s1 = (band1[1] - band1[0]) / (n1 - 1)
    s2 = (band2[1] - band2[0]) / (n2 - 1)
    g1 = np.sqrt(spectral_density(shape, e1, strength) * s1)
    g2 = np.sqrt(spectral_density(shape, e2, strength) * s2)
    energies = np.concatenate([e1, e2])
    weights = np.concatenate([g1, g2])
    H_B = np.diag(np.concatenate([[0.0], energies])).astype(complex)
    # energies are non-negative, so the vacuum weight 1 is the largest
    pops = np.empty(n1 + n2 + 1)
    pops[0] = 1.0
    pops[1:n1 + 1] = np.exp(-beta1 * e1)
    pops[n1 + 1:] = np.exp(-beta2 * e2)
    omega_B = np.diag(pops / pops.sum()).astype(complex)
    model = BathModel(H_B, omega_B, [], energies, weights, beta1, beta2, shape,
                      meta={"band": band1, "band2": band2, "split": n1})
    model.couplings = [_centred(model.field_operator(weights), omega_B)]
    return model


@dataclass
class CorrelatedState:
    rho: np.ndarray
    rho_S: np.ndarray
    rho_B: np.ndarray
    delta: np.ndarray
    correlation_norm: float
    q_part_norm: float


def correlated_initial_state(factors, omega_B: np.ndarray, dims: CompositeDims,
                             sigma: np.ndarray | None = None) -> CorrelatedState:
    """Normalized sum_i L_i (sigma kron omega_B) L_i^dagger and its product/correlation split.

    ``sigma`` defaults to the identity on the system, i.e. the image of 1 kron omega_B.
    """
    sigma = np.eye(dims.d_S) if sigma is None else np.asarray(sigma)
    base = np.kron(sigma, omega_B)
    rho = sum(L @ base @ L.conj().T for L in factors)
    tr = np.trace(rho)
    if abs(tr) < 1e-14:
        raise ValueError("perturbed state has zero trace")
    rho = rho / tr
    rho = 0.5 * (rho + rho.conj().T)
    lo = np.linalg.eigvalsh(rho)[0]
    if lo < -TOL_POS:
        raise ValueError(f"perturbed state is not positive (min eigenvalue {lo:.3e})")
    rho_S = partial_trace_bath(rho, dims)
    rho_B = partial_trace_system(rho, dims)
    delta = rho - np.kron(rho_S, rho_B)
    q_part = rho - np.kron(rho_S, omega_B)
    return CorrelatedState(rho, rho_S, rho_B, delta, trace_norm(delta), trace_norm(q_part))


def is_stationary(bath: BathModel) -> bool:
    return stationarity_defect(bath.H_B, bath.omega_B) <= 1e-10 * max(1.0, np.abs(bath.H_B).max())

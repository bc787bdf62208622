"""Markovian limit generator, its master equation, and exact scaled reduced dynamics."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, null_space

from .liouville import UnitaryPropagator, check_density_matrix, partial_trace_bath
from .models import OpenSystemModel
from .projection import (
    ModifiedFreeFlow,
    NZSplit,
    check_coupling_condition,
    initial_correlation_table,
    memory_kernel_table,
)

log = logging.getLogger(__name__)

WINDOW_FRACTION = 0.8


class WindowError(ValueError):
    """Requested physical time exceeds the recurrence-limited validity window."""


@dataclass
class DaviesGenerator:
    K: np.ndarray
    method: str
    parameter: float
    blocks: dict
    system_basis: np.ndarray

    @property
    def d_S(self) -> int:
        return self.system_basis.shape[0]

    def stationary_state(self) -> np.ndarray:
        """Density matrix spanning the (numerical) kernel of K."""
        _, s, vh = np.linalg.svd(self.K)
        v = vh[-1].conj()
        rho = v.reshape(self.d_S, self.d_S, order="F")
        rho = rho / np.trace(rho)
        return 0.5 * (rho + rho.conj().T)


def _free_eigenbasis(model: OpenSystemModel):
    eS, VS = np.linalg.eigh(model.H_S)
    eB, VB = np.linalg.eigh(model.bath.H_B)
    energies = (eS[:, None] + eB[None, :]).ravel()
    return eS, VS, energies, np.kron(VS, VB)


def _vec_change(V: np.ndarray) -> np.ndarray:
    """Matrix S with vec(V X V^dagger) = S vec(X) (column stacking)."""
    return np.kron(V.conj(), V)


def _davies_blocks(model: OpenSystemModel, split: NZSplit, weight) -> tuple[np.ndarray, dict]:
    """Shared driver: ``weight(z)`` turns exp((L0 + i w) t) into the chosen time integral."""
    if not split.reference_is_zero_eigenprojection:
        raise ValueError("the limit generator needs a stationary reference state")
    resid = check_coupling_condition(model.H_int, split)
    if resid > 1e-10:
        raise ValueError(f"coupling condition violated (||P L_SB P|| = {resid:.3e})")
    eS, VS, E0, U0 = _free_eigenbasis(model)
    d = len(eS)
    H_SB = model.H_int
    h0 = U0.conj().T @ H_SB @ U0
    gaps = E0[:, None] - E0[None, :]
    w_ab = eS[:, None] - eS[None, :]
    K_eig = np.zeros((d * d, d * d), dtype=complex)
    blocks = {}
    for a in range(d):
        for b in range(d):
            E = np.outer(VS[:, a], VS[:, b].conj())
            X = np.kron(E, split.omega_B)
            X = -1j * (H_SB @ X - X @ H_SB)
            X = split.apply_Q(X)
            Xe = U0.conj().T @ X @ U0
            Re = weight(-1j * gaps + 1j * w_ab[a, b]) * Xe
            Ye = -1j * (h0 @ Re - Re @ h0)
            Y = partial_trace_bath(U0 @ Ye @ U0.conj().T, model.dims)
            Ys = VS.conj().T @ Y @ VS
            # keep only the output sector with the same Bohr frequency as the input
            mask = np.abs(w_ab - w_ab[a, b]) <= 1e-9 * max(1.0, np.abs(w_ab).max())
            Ys = np.where(mask, Ys, 0.0)
            K_eig[:, b * d + a] = Ys.reshape(-1, order="F")
            key = round(float(w_ab[a, b]), 9)
            blocks.setdefault(key, []).append((a, b))
    S = _vec_change(VS)
    K = S @ K_eig @ S.conj().T
    return K, blocks


def davies_generator(model: OpenSystemModel, split: NZSplit, method: str = "resolvent",
                     eta: float | None = None, T_int: float | None = None) -> DaviesGenerator:
    """Limit generator from either a capped time integral or a regularized resolvent.

    ``eta`` defaults to one bath level spacing, ``T_int`` to a quarter of
    the recurrence time.
    """
    dw = model.bath.delta_omega
    if method == "resolvent":
        eta = dw if eta is None else eta
        if eta < 1e-3 * dw:
            raise ValueError("regularization below 1e-3 level spacings is singular")
        K, blocks = _davies_blocks(model, split, lambda z: -1.0 / (z - eta))
        par = eta
    elif method == "time-integral":
        T_int = 0.25 * model.bath.recurrence_time if T_int is None else T_int
        if T_int > WINDOW_FRACTION * model.bath.recurrence_time:
            raise WindowError(f"T_int={T_int:.4g} exceeds {WINDOW_FRACTION} of the recurrence time")

        def weight(z):
            small = np.abs(z * T_int) < 1e-8
            safe = np.where(small, 1j, z)
            return np.where(small, T_int + 0.5 * z * T_int**2, np.expm1(safe * T_int) / safe)

        K, blocks = _davies_blocks(model, split, weight)
        par = T_int
    else:
        raise ValueError(f"unknown construction {method!r}")
    gen = DaviesGenerator(K, method, par, blocks, np.eye(model.dims.d_S))
    top = np.max(np.linalg.eigvals(K).real)
    if top > 1e-8:
        log.warning("limit generator has eigenvalue with real part %.3e > 0", top)
    return gen


def relative_difference(K1: DaviesGenerator, K2: DaviesGenerator) -> float:
    return float(np.linalg.norm(K1.K - K2.K) / np.linalg.norm(K2.K))


def solve_master_equation(gen: DaviesGenerator, sigma0: np.ndarray, tau_grid) -> np.ndarray:
    """sigma(tau) = exp(K tau) sigma0 for each tau; returns shape (len(tau_grid), d_S, d_S)."""
    check_density_matrix(sigma0, "sigma0")
    d = gen.d_S
    v = sigma0.reshape(-1, order="F")
    out = np.empty((len(tau_grid), d, d), dtype=complex)
    for i, tau in enumerate(tau_grid):
        out[i] = (expm(gen.K * tau) @ v).reshape(d, d, order="F")
    return out


def resolvent_regularized(model: OpenSystemModel, split: NZSplit, omega: float, eta: float,
                          X: np.ndarray, negative_time: bool = False) -> np.ndarray:
    """-Q (L0 + i omega -/+ eta)^(-1) Q applied to an operator X.

    The sign of eta is flipped for the negative-time variant.
    """
    if eta < 1e-3 * model.bath.delta_omega:
        raise ValueError("regularization below 1e-3 level spacings is singular")
    _, _, E0, U0 = _free_eigenbasis(model)
    gaps = E0[:, None] - E0[None, :]
    shift = eta if negative_time else -eta
    Xe = U0.conj().T @ split.apply_Q(X) @ U0
    Re = -Xe / (-1j * gaps + 1j * omega + shift)
    return split.apply_Q(U0 @ Re @ U0.conj().T)


def null_space_state(gen: DaviesGenerator) -> np.ndarray:
    ns = null_space(gen.K, rcond=1e-8)
    if ns.shape[1] == 0:
        return gen.stationary_state()
    v = ns[:, 0]
    rho = v.reshape(gen.d_S, gen.d_S, order="F")
    return rho / np.trace(rho)


class ScaledDynamics:
    """Exact interaction-picture reduced state exp(-L_S t) tr_B rho(t) at t = tau / lam^2."""

    def __init__(self, model: OpenSystemModel, lam: float, rho0: np.ndarray):
        self.model = model
        self.lam = lam
        self.rho0 = rho0
        self.prop = UnitaryPropagator(model.hamiltonian(lam))
        self.eS, self.VS = np.linalg.eigh(model.H_S)
        self.limit = WINDOW_FRACTION * model.bath.recurrence_time

    def check_window(self, tau_max: float) -> None:
        t = abs(tau_max) / self.lam**2 if self.lam > 0 else 0.0
        if t > self.limit * (1 + 1e-12):
            raise WindowError(f"t = {t:.4g} exceeds {WINDOW_FRACTION} T_rec = {self.limit:.4g} "
                              f"(T_rec = {self.model.bath.recurrence_time:.4g})")

    def times(self, tau_grid) -> np.ndarray:
        tau = np.asarray(tau_grid, dtype=float)
        return tau / self.lam**2

    def states(self, tau_grid, chunk: int = 16) -> np.ndarray:
        tau = np.asarray(tau_grid, dtype=float)
        self.check_window(np.max(np.abs(tau)) if len(tau) else 0.0)
        t = self.times(tau)
        d = self.model.dims.d_S
        out = np.empty((len(t), d, d), dtype=complex)
        for s in range(0, len(t), chunk):
            rhos = self.prop.evolve_many(self.rho0, t[s:s + chunk])
            for i, r in enumerate(rhos):
                out[s + i] = partial_trace_bath(r, self.model.dims)
        # back-rotate with the free system evolution
        ph = np.exp(1j * (self.eS[:, None] - self.eS[None, :])[None] * t[:, None, None])
        inner = self.VS.conj().T @ out @ self.VS
        return self.VS @ (ph * inner) @ self.VS.conj().T

    def full_states(self, tau_grid) -> np.ndarray:
        tau = np.asarray(tau_grid, dtype=float)
        self.check_window(np.max(np.abs(tau)) if len(tau) else 0.0)
        return self.prop.evolve_many(self.rho0, self.times(tau))


def scaled_reduced_state(model: OpenSystemModel, lam: float, tau: float, rho0: np.ndarray) -> np.ndarray:
    if lam == 0:
        return partial_trace_bath(rho0, model.dims)
    return ScaledDynamics(model, lam, rho0).states([tau])[0]


def prelimit_consistency_check(model: OpenSystemModel, lam: float, tau_max: float, split: NZSplit,
                               rho0: np.ndarray, step: float, n_report: int = 32):
    """Residual of the exact pre-limit integral identity on a uniform grid.

    ``step`` is the quadrature step in physical time; ``tau_max / lam**2`` must be
    a multiple of it up to rounding. Returns (tau_report, residual trace norms).
    """
    t_end = tau_max / lam**2
    n_steps = int(round(t_end / step))
    h = t_end / n_steps
    if (n_steps % (n_report - 1)) != 0:
        raise ValueError("report grid must lie on the quadrature lattice")
    flow = ModifiedFreeFlow(model, split, lam)
    flow.check_step(h)
    eS, VS = flow.system_eigenbasis()
    d = len(eS)
    w_ab = eS[:, None] - eS[None, :]
    times, Kcum = memory_kernel_table(flow, t_end, h)
    _, Icum = initial_correlation_table(flow, rho0, t_end, h)
    dyn = ScaledDynamics(flow.model, lam, rho0)
    tau = times * lam**2
    rho_I = VS.conj().T @ dyn.states(tau) @ VS
    r = rho_I.reshape(len(tau), d * d)  # row-major: index a*d + b matches memory inputs
    w_in = w_ab.reshape(-1)
    dtau = h * lam**2
    stride = n_steps // (n_report - 1)
    report = np.arange(0, n_steps + 1, stride)
    resid = np.empty(len(report))
    for out_i, k in enumerate(report):
        if k == 0:
            conv = np.zeros((d, d), dtype=complex)
        else:
            i = np.arange(k + 1)
            wts = np.full(k + 1, dtau)
            wts[0] = wts[-1] = 0.5 * dtau
            # phase exp(i (w_out - w_in) t_i) with t_i the convolution variable
            ph_in = np.exp(-1j * w_in[None, :] * times[i][:, None])
            coef = wts[:, None] * r[i] * ph_in  # [i, j]
            ph_out = np.exp(1j * w_ab[None] * times[i][:, None, None])  # [i, a, b]
            Kk = Kcum[k - i]  # [i, j, a, b]
            conv = np.einsum("ij,iab,ijab->ab", coef, ph_out, Kk)
        lhs = rho_I[k] - rho_I[0] - conv - lam * Icum[k]
        resid[out_i] = float(np.sum(np.linalg.svd(lhs, compute_uv=False)))
    return tau[report], resid

"""Projection operators built from a bath reference state and the exact pre-limit kernels.

The generator of the irrelevant-part dynamics is

    L0' = L0 + lam * Q L_SB Q,

which equals the full Liouvillian minus lam * (P L_SB + L_SB P - P L_SB P).
In the eigenbasis of the full Hamiltonian the first piece is diagonal and
the correction has rank at most 3 * d_S**2, so L0' is applied matrix-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.sparse.linalg import LinearOperator

from .liouville import (
    DENSE_EXP_CAP,
    TOL_PROJ,
    CompositeDims,
    check_density_matrix,
    commutator_superop,
    lift_superop_bath,
    lift_superop_system,
    partial_trace_bath,
)
from .models import OpenSystemModel
from .spectral import stationarity_defect, stationarity_tolerance, zero_eigenprojection

@dataclass
class NZSplit:
    """P rho = tr_B(rho) kron omega_B and its complement Q = 1 - P."""

    omega_B: np.ndarray
    dims: CompositeDims
    reference_is_stationary: bool
    reference_is_zero_eigenprojection: bool
    stationarity_defect: float = 0.0

    def apply_P(self, X: np.ndarray) -> np.ndarray:
        return np.kron(partial_trace_bath(X, self.dims), self.omega_B)

    def apply_Q(self, X: np.ndarray) -> np.ndarray:
        return X - self.apply_P(X)

    def P_matrix(self) -> np.ndarray:
        return zero_eigenprojection(self.omega_B, self.dims.d_S)

    def Q_matrix(self) -> np.ndarray:
        return np.eye(self.dims.D ** 2) - self.P_matrix()


def make_projector(omega_B: np.ndarray, dims: CompositeDims, H_B: np.ndarray | None = None) -> NZSplit:
    omega_B = np.asarray(omega_B, dtype=complex)
    if abs(np.trace(omega_B) - 1) > 1e-10:
        raise ValueError(f"reference state has trace {np.trace(omega_B).real:.6g}, expected 1")
    check_density_matrix(omega_B, "omega_B")
    if omega_B.shape[0] != dims.d_B:
        raise ValueError("reference state does not match the bath dimension")
    defect = 0.0 if H_B is None else stationarity_defect(H_B, omega_B)
    stationary = H_B is not None and defect <= stationarity_tolerance(H_B)
    zero_proj = False
    if stationary:
        # with a stationary reference the projector coincides with the zero-eigenprojection map
        if dims.D ** 2 <= DENSE_EXP_CAP:
            P = zero_eigenprojection(omega_B, dims.d_S)
            diff = P - zero_eigenprojection(omega_B, dims.d_S, H_B)
            zero_proj = bool(np.abs(diff).max() <= TOL_PROJ)
        else:
            zero_proj = True
    return NZSplit(omega_B, dims, stationary, zero_proj, defect)


def coupling_superop_on_system(H_SB: np.ndarray, split: NZSplit) -> np.ndarray:
    """Matrix of sigma -> tr_B(-i [H_SB, sigma kron omega_B]) on column-stacked system operators."""
    d = split.dims.d_S
    cols = []
    for k in range(d * d):
        E = np.zeros(d * d, dtype=complex)
        E[k] = 1
        sig = E.reshape(d, d, order="F")
        X = np.kron(sig, split.omega_B)
        cols.append(partial_trace_bath(-1j * (H_SB @ X - X @ H_SB), split.dims).reshape(-1, order="F"))
    return np.array(cols).T


def check_coupling_condition(H_SB: np.ndarray, split: NZSplit) -> float:
    """Norm of P L_SB P, evaluated on the range of P."""
    return float(np.linalg.norm(coupling_superop_on_system(H_SB, split), 2))


def decompose_liouvillian(model: OpenSystemModel, lam: float, split: NZSplit, tol: float = 1e-10):
    """Five-term split of the total Liouvillian; dense, for small composite dimensions.

    Returns (terms, residual) where ``terms`` maps a label to its superoperator.
    """
    resid = check_coupling_condition(model.H_int, split)
    if resid > tol:
        raise ValueError(f"coupling condition violated (||P L_SB P|| = {resid:.3e})")
    dims = model.dims
    L_S = lift_superop_system(-1j * commutator_superop(model.H_S), dims)
    L_B = lift_superop_bath(-1j * commutator_superop(model.bath.H_B), dims)
    L_SB = -1j * commutator_superop(model.H_int)
    L0 = L_S + L_B
    L = L0 + lam * L_SB
    P = split.P_matrix()
    Q = np.eye(P.shape[0]) - P
    terms = {
        "P L_S P": P @ L_S @ P,
        "Q L0 Q": Q @ L0 @ Q,
        "lam Q L_SB Q": lam * Q @ L_SB @ Q,
        "lam P L_SB Q": lam * P @ L_SB @ Q,
        "lam Q L_SB P": lam * Q @ L_SB @ P,
    }
    residual = float(np.abs(sum(terms.values()) - L).max())
    return terms, residual


def _inner(A: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Hilbert-Schmidt products tr(A_r^dagger X_n) -> array [n, r]."""
    return np.einsum("rab,nab->nr", A.conj(), X)


@dataclass
class ModifiedFreeFlow:
    """Propagation under L0' for a given model, reference state and coupling constant.

    Operators handed to and returned by the public methods live in the
    original basis; internally they are held in the eigenbasis of H(lam).
    """

    model: OpenSystemModel
    split: NZSplit
    lam: float
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        m = self.model.recentred(self.split.omega_B)
        self.model = m
        d_S, d_B = m.dims.d_S, m.dims.d_B
        self.d_S, self.D = d_S, m.dims.D
        H = m.hamiltonian(self.lam)
        self.energies, self.U = np.linalg.eigh(H)
        self.gaps = self.energies[:, None] - self.energies[None, :]
        self.diag = -1j * self.gaps
        h = self.to_eig(m.H_int)
        basis = np.zeros((d_S * d_S, d_S, d_S), dtype=complex)
        for i in range(d_S):
            for j in range(d_S):
                basis[i * d_S + j, i, j] = 1
        self.sys_basis = basis
        W = np.array([self.to_eig(np.kron(E, np.eye(d_B))) for E in basis])
        O = np.array([self.to_eig(np.kron(E, self.split.omega_B)) for E in basis])
        self.W, self.O = W, O
        self.A = 1j * (h @ W - W @ h)  # adjoint of L_SB applied to W
        self.C = -1j * (h @ O - O @ h)  # L_SB applied to O
        self.G = _inner(W, self.C)  # [k, r] = <W_r, L_SB O_k>
        self.AO = _inner(self.A, O)  # [k, r] = <A_r, O_k>
        self.h = h
        self.norm = float(np.ptp(self.energies)) + 2 * abs(self.lam) * float(np.linalg.norm(h, 2))

    # basis changes ---------------------------------------------------------
    def to_eig(self, X):
        return self.U.conj().T @ X @ self.U

    def from_eig(self, X):
        return self.U @ X @ self.U.conj().T

    # superoperator pieces in the eigenbasis -------------------------------
    def P_e(self, X):
        c = _inner(self.W, X)
        return np.einsum("nr,rab->nab", c, self.O)

    def Q_e(self, X):
        return X - self.P_e(X)

    def L_SB_e(self, X):
        return -1j * (self.h @ X - X @ self.h)

    def _flat(self):
        """Stacked, conjugated functionals [W; A] and sources [O; C] as (2 d_S^2, D^2) arrays."""
        if "flat" not in self._cache:
            n2 = self.D * self.D
            W, O, A, C = (Z.reshape(-1, n2) for Z in (self.W, self.O, self.A, self.C))
            funcs = np.ascontiguousarray(np.vstack([W, A]).conj().T)
            adj_funcs = np.ascontiguousarray(np.vstack([O, C]).conj().T)
            self._cache["flat"] = (funcs, np.vstack([O, C]), adj_funcs, np.vstack([A, W]))
        return self._cache["flat"]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """L0' applied to a stack of eigenbasis operators of shape (n, D, D)."""
        funcs, sources, _, _ = self._flat()
        p = self.d_S ** 2
        ca = X.reshape(X.shape[0], -1) @ funcs
        c, a = ca[:, :p], ca[:, p:]
        coef = np.hstack([a - c @ self.G, c])
        return self.diag * X - self.lam * (coef @ sources).reshape(X.shape)

    def apply_adjoint(self, Y: np.ndarray) -> np.ndarray:
        _, _, adj_funcs, adj_sources = self._flat()
        p = self.d_S ** 2
        oc = Y.reshape(Y.shape[0], -1) @ adj_funcs
        o, cc = oc[:, :p], oc[:, p:]
        coef = np.hstack([o, cc - o @ self.G.conj().T])
        return self.diag.conj() * Y - self.lam * (coef @ adj_sources).reshape(Y.shape)

    def reduce(self, X: np.ndarray) -> np.ndarray:
        """tr_B(L_SB Q X) for a stack of eigenbasis operators, as system matrices."""
        funcs = self._flat()[0]
        p = self.d_S ** 2
        ca = X.reshape(X.shape[0], -1) @ funcs
        vals = ca[:, p:] - ca[:, :p] @ self.AO
        return vals.reshape(-1, self.d_S, self.d_S)

    def linear_operator(self) -> LinearOperator:
        D = self.D

        def wrap(f):
            def matmat(V):
                V = np.asarray(V).reshape(D * D, -1)
                n = V.shape[1]
                return f(V.T.reshape(n, D, D)).reshape(n, D * D).T
            return matmat

        fwd, bwd = wrap(self.apply), wrap(self.apply_adjoint)
        return LinearOperator((D * D, D * D), matvec=lambda v: fwd(v)[:, 0], matmat=fwd,
                              rmatvec=lambda v: bwd(v)[:, 0], rmatmat=bwd, dtype=complex)

    def dense_step(self, h: float) -> np.ndarray:
        key = ("dense", h)
        if key not in self._cache:
            D = self.D
            M = self.apply(np.eye(D * D, dtype=complex).reshape(D * D, D, D)).reshape(D * D, D * D).T
            self._cache[key] = expm(M * h)
        return self._cache[key]

    def check_step(self, h: float) -> None:
        if abs(h) * self.norm > 0.1 + 1e-12:
            raise ValueError(f"quadrature step {abs(h):.4g} too coarse for generator norm "
                             f"{self.norm:.4g} (need step <= {0.1 / self.norm:.4g})")

    def trajectory(self, X0: np.ndarray, n_steps: int, h: float):
        """Yield (k, X_k) with X_k = exp(L0' k h) X0 for k = 0..n_steps (eigenbasis stacks)."""
        self.check_step(h)
        X = np.array(X0, dtype=complex)
        n = X.shape[0]
        D = self.D
        yield 0, X
        if n_steps == 0:
            return
        if D * D <= DENSE_EXP_CAP:
            S = self.dense_step(h)
            V = X.reshape(n, D * D).T
            for k in range(1, n_steps + 1):
                V = S @ V
                yield k, V.T.reshape(n, D, D)
            return
        # the guard keeps h * ||L0'|| <= 0.1, so a short Taylor series is exact to rounding
        order = taylor_order(abs(h) * self.norm)
        for k in range(1, n_steps + 1):
            term, acc = X, X.copy()
            for j in range(1, order + 1):
                term = self.apply(term) * (h / j)
                acc += term
            X = acc
            yield k, X

    def system_eigenbasis(self):
        e, V = np.linalg.eigh(self.model.H_S)
        return e, V


def taylor_order(x: float, tol: float = 1e-15) -> int:
    """Smallest m with x^(m+1)/(m+1)! below ``tol``."""
    m, term = 0, 1.0
    while True:
        term *= x / (m + 1)
        if term <= tol:
            return max(m, 1)
        m += 1


def _trapezoid_weights(n_steps: int, h: float) -> np.ndarray:
    w = np.full(n_steps + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _grid(t_end: float, step: float) -> tuple[int, float]:
    n = int(np.ceil(abs(t_end) / step - 1e-9))
    if n == 0:
        return 0, 0.0
    return n, t_end / n


def kernel_R(m: int, lam: float, tau: float, flow: ModifiedFreeFlow, omegas: np.ndarray,
             probes: np.ndarray, step: float) -> np.ndarray:
    """R_m applied to probe operators: integral over [0, tau/lam^2] of Q exp((L0' + i w_m) t) X dt.

    ``probes`` is a stack (n, D, D) in the original basis; the result has the same shape.
    Negative ``tau`` integrates backwards in time with a signed measure.
    """
    n_steps, h = _grid(tau / lam**2, step)
    X0 = np.array([flow.to_eig(p) for p in probes])
    if n_steps == 0:
        return np.zeros_like(X0)
    w = _trapezoid_weights(n_steps, h)
    acc = np.zeros_like(X0)
    for k, X in flow.trajectory(X0, n_steps, h):
        acc += w[k] * np.exp(1j * omegas[m] * k * h) * flow.Q_e(X)
    return np.array([flow.from_eig(a) for a in acc])


def _sys_to_eigen(flow: ModifiedFreeFlow):
    """Eigenbasis of H_S: energies, eigenvectors and Bohr frequencies omega_ab = E_a - E_b."""
    e, V = flow.system_eigenbasis()
    return e, V, e[:, None] - e[None, :]


def reduced_kernel_trajectory(flow: ModifiedFreeFlow, inputs: np.ndarray, t_end: float, step: float):
    """Z_n(t_k) = tr_B(L_SB Q exp(L0' t_k) X_n) on a uniform grid, original system basis.

    Returns (times, Z) with Z of shape (n_steps + 1, n, d_S, d_S).
    """
    n_steps, h = _grid(t_end, step)
    X0 = np.array([flow.to_eig(flow.split.apply_Q(x)) for x in inputs])
    Z = np.empty((n_steps + 1, len(inputs), flow.d_S, flow.d_S), dtype=complex)
    for k, X in flow.trajectory(X0, n_steps, h):
        Z[k] = flow.reduce(X)
    return np.arange(n_steps + 1) * h, Z


def memory_kernel_inputs(flow: ModifiedFreeFlow):
    """L_SB (E_ab kron omega_B) for the matrix units E_ab of the H_S eigenbasis."""
    _, V, _ = _sys_to_eigen(flow)
    d = flow.d_S
    H_SB = flow.model.H_int
    out = []
    for a in range(d):
        for b in range(d):
            E = np.outer(V[:, a], V[:, b].conj())
            X = np.kron(E, flow.split.omega_B)
            out.append(-1j * (H_SB @ X - X @ H_SB))
    return np.array(out)


def memory_kernel_table(flow: ModifiedFreeFlow, t_end: float, step: float):
    """Cumulative memory kernels on a uniform grid in the H_S eigenbasis.

    Returns (times, Kcum) with Kcum[k, j] the image of matrix unit j under
    sum_m K_m(t_k) where the m-sum is expressed entrywise: entry (a, b) picks
    up the phase exp(i (E_a - E_b) t).
    """
    _, V, w_ab = _sys_to_eigen(flow)
    times, Z = reduced_kernel_trajectory(flow, memory_kernel_inputs(flow), t_end, step)
    Zs = V.conj().T @ Z @ V
    integrand = np.exp(1j * w_ab[None, None] * times[:, None, None, None]) * Zs
    return times, _cumtrapz(integrand, times)


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    if len(t) > 1:
        dt = np.diff(t).reshape((-1,) + (1,) * (y.ndim - 1))
        out[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]), axis=0)
    return out


def memory_kernel(m: int, n: int, lam: float, tau: float, flow: ModifiedFreeFlow, step: float,
                  bohr=None) -> np.ndarray:
    """K_mn(tau) as a d_S^2 x d_S^2 superoperator on column-stacked system operators."""
    from .spectral import bohr_decomposition

    bohr = bohr_decomposition(flow.model.H_S) if bohr is None else bohr
    d = flow.d_S
    n_steps, h = _grid(tau / lam**2, step)
    inputs = []
    for k in range(d * d):
        E = np.zeros(d * d, dtype=complex)
        E[k] = 1
        sig = bohr.project(n, E.reshape(d, d, order="F"))
        X = np.kron(sig, flow.split.omega_B)
        inputs.append(-1j * (flow.model.H_int @ X - X @ flow.model.H_int))
    if n_steps == 0:
        return np.zeros((d * d, d * d), dtype=complex)
    times, Z = reduced_kernel_trajectory(flow, np.array(inputs), n_steps * h, abs(h))
    phase = np.exp(1j * bohr.frequencies[m] * times)
    integral = np.einsum("t,tnab->nab", _trapezoid_weights(n_steps, h) * phase, Z)
    cols = [bohr.project(m, integral[k]).reshape(-1, order="F") for k in range(d * d)]
    return np.array(cols).T


def initial_correlation_table(flow: ModifiedFreeFlow, rho0: np.ndarray, t_end: float, step: float):
    """Cumulative correlation term (without the factor lam) in the H_S eigenbasis.

    Entry (a, b) at time t is the integral over [0, t] of exp(i (E_a - E_b) s)
    [tr_B L_SB exp(L0' s) Q rho0]_ab ds.
    """
    _, V, w_ab = _sys_to_eigen(flow)
    times, Z = reduced_kernel_trajectory(flow, np.array([rho0]), t_end, step)
    Zs = V.conj().T @ Z[:, 0] @ V
    integrand = np.exp(1j * w_ab[None] * times[:, None, None]) * Zs
    return times, _cumtrapz(integrand, times)


def initial_correlation_term(lam: float, tau: float, rho0: np.ndarray, flow: ModifiedFreeFlow,
                             step: float) -> np.ndarray:
    """I(tau) restricted to the system factor (multiply by omega_B for the full operator)."""
    if tau == 0:
        return np.zeros((flow.d_S, flow.d_S), dtype=complex)
    n_steps, h = _grid(tau / lam**2, step)
    _, V, _ = _sys_to_eigen(flow)
    times, cum = initial_correlation_table(flow, rho0, n_steps * h, abs(h))
    return lam * (V @ cum[-1] @ V.conj().T)

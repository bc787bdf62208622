"""Few-mode bosonic baths: Gaussian states, Wick contractions, sector overlaps and Fock-space oracles.

Fock spaces here are truncated by total excitation number, so every
number-conserving quadratic operator b_k^dagger b_k' acts exactly inside
each excitation block and only the top block is cut.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

MAX_FOCK_MODES = 4
TAIL_TOL = 1e-6


def bose_function(W):
    """Occupation 1 / (e^W - 1) for positive W."""
    W = np.asarray(W, dtype=float)
    if np.any(W <= 0):
        raise ValueError("Bose function needs positive exponents")
    return 1.0 / np.expm1(W)


@dataclass
class GaussianBathSpec:
    """rho_W proportional to exp(-sum_kk' b_k^dagger W_kk' b_k') on a mode grid."""

    omegas: np.ndarray
    W: np.ndarray
    n_max: int = 12

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        self.W = np.asarray(self.W, dtype=complex)
        if self.W.shape != (len(self.omegas),) * 2:
            raise ValueError("W must be square on the mode grid")
        if not np.allclose(self.W, self.W.conj().T, atol=1e-12):
            raise ValueError("W must be Hermitian")
        if np.linalg.eigvalsh(self.W)[0] <= 0:
            raise ValueError("W must be positive definite for a normalizable state")

    @classmethod
    def thermal(cls, omegas, beta: float, W_tilde=None, n_max: int = 12) -> "GaussianBathSpec":
        if beta <= 0:
            raise ValueError("inverse temperature must be positive")
        omegas = np.asarray(omegas, dtype=float)
        W = np.diag(beta * omegas).astype(complex)
        if W_tilde is not None:
            W = W + np.asarray(W_tilde)
        return cls(omegas, W, n_max)

    @property
    def n_modes(self) -> int:
        return len(self.omegas)

    @property
    def diagonal_part(self) -> np.ndarray:
        return np.real(np.diag(self.W))


# ---------------------------------------------------------------- Fock space

class FockSpace:
    """Occupation basis of n_modes bosons with total number <= n_max."""

    def __init__(self, n_modes: int, n_max: int):
        if n_modes > MAX_FOCK_MODES:
            raise ValueError(f"brute-force Fock route refused above {MAX_FOCK_MODES} modes")
        self.n_modes, self.n_max = n_modes, n_max
        states = [s for s in itertools.product(range(n_max + 1), repeat=n_modes) if sum(s) <= n_max]
        states.sort(key=lambda s: (sum(s), s))
        self.states = np.array(states, dtype=int).reshape(len(states), n_modes)
        self.index = {tuple(s): i for i, s in enumerate(states)}
        self.total = self.states.sum(axis=1)
        self.dim = len(states)
        self.annihilators = [self._annihilator(k) for k in range(n_modes)]

    def _annihilator(self, k: int) -> np.ndarray:
        a = np.zeros((self.dim, self.dim))
        for i, s in enumerate(self.states):
            if s[k] > 0:
                t = s.copy()
                t[k] -= 1
                a[self.index[tuple(t)], i] = np.sqrt(s[k])
        return a

    def quadratic(self, M: np.ndarray) -> np.ndarray:
        """sum_kk' M_kk' b_k^dagger b_k'."""
        b = self.annihilators
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for k in range(self.n_modes):
            for q in range(self.n_modes):
                if M[k, q] != 0:
                    out += M[k, q] * (b[k].T @ b[q])
        return out

    def top_shell(self) -> np.ndarray:
        return self.total == self.n_max


def fock_gaussian_state(spec: GaussianBathSpec, space: FockSpace | None = None):
    space = FockSpace(spec.n_modes, spec.n_max) if space is None else space
    G = space.quadratic(spec.W)
    E, V = np.linalg.eigh(0.5 * (G + G.conj().T))
    w = np.exp(-(E - E.min()))
    rho = (V * w) @ V.conj().T
    rho /= np.trace(rho).real
    tail = float(np.real(np.diag(rho)[space.top_shell()].sum()))
    return rho, space, tail


def _require_tail(tail: float) -> None:
    if tail > TAIL_TOL:
        raise ValueError(f"Fock cutoff too small: top-shell mass {tail:.2e} exceeds {TAIL_TOL:.0e}")


def two_point_function(spec: GaussianBathSpec, method: str = "fock") -> np.ndarray:
    """N[x, y] = <b_y^dagger b_x> in rho_W.

    ``fock`` traces over the truncated Fock space (at most four modes);
    ``closed`` uses the single-particle formula (e^W - 1)^(-1).
    """
    if method == "closed":
        E, V = np.linalg.eigh(spec.W)
        return (V * bose_function(E)) @ V.conj().T
    if method != "fock":
        raise ValueError(f"unknown method {method!r}")
    rho, space, tail = fock_gaussian_state(spec)
    _require_tail(tail)
    b = space.annihilators
    n = spec.n_modes
    N = np.empty((n, n), dtype=complex)
    for x in range(n):
        for y in range(n):
            N[x, y] = np.trace(b[y].T @ b[x] @ rho)
    return N


# ---------------------------------------------------------------- Wick route

def wick_expectation(slots, tensors, subscripts, two_point: np.ndarray):
    """Gaussian expectation of an ordered product of mode operators weighted by coefficient tensors.

    ``slots`` lists (kind, label) with kind "a" (annihilator) or "c" (creator);
    ``tensors``/``subscripts`` give the coefficient arrays summed over the labels.
    Every bijection from annihilators to creators contributes the product of
    ordered contractions <b_x b_y^dagger> = 1 + N[x, y] or <b_y^dagger b_x> = N[x, y].
    """
    ann = [(i, lab) for i, (kind, lab) in enumerate(slots) if kind == "a"]
    cre = [(i, lab) for i, (kind, lab) in enumerate(slots) if kind == "c"]
    if len(ann) != len(cre):
        return 0.0
    eye = np.eye(two_point.shape[0])
    total = 0.0
    for perm in itertools.permutations(range(len(cre))):
        ops, subs = list(tensors), list(subscripts)
        for (ia, la), j in zip(ann, perm):
            ic, lc = cre[j]
            ops.append(eye + two_point if ia < ic else two_point)
            subs.append(la + lc)
        total = total + np.einsum(",".join(subs) + "->", *ops, optimize=True)
    return total


@dataclass
class CorrelationResult:
    times: np.ndarray
    wick: np.ndarray
    fock: np.ndarray | None
    limit: complex
    normalization: complex


def _perturbed_norm(w, two_point):
    return wick_expectation([("a", "f"), ("c", "e")], [w], ["ef"], two_point)


def mixing_correlation_gaussian(spec: GaussianBathSpec, X: np.ndarray, Y: np.ndarray, w: np.ndarray,
                                t_grid, fock: bool | None = None) -> CorrelationResult:
    """<X(t) Y> in rho_B = sum_kk' w_kk' b_k^dagger rho_W b_k' / Z, X and Y quadratic.

    X(t) = e^{iHt} X e^{-iHt} with H = sum omega_k b_k^dagger b_k. The Fock
    oracle runs by default for at most four modes and is refused above.
    """
    t = np.asarray(t_grid, dtype=float)
    n = spec.n_modes
    fock = (n <= MAX_FOCK_MODES) if fock is None else fock
    if fock and n > MAX_FOCK_MODES:
        raise ValueError(f"brute-force Fock route refused above {MAX_FOCK_MODES} modes")
    N = two_point_function(spec, "closed")
    Z = _perturbed_norm(w, N)
    slots = [("a", "f"), ("c", "a"), ("a", "b"), ("c", "c"), ("a", "d"), ("c", "e")]
    gaps = spec.omegas[:, None] - spec.omegas[None, :]
    wick = np.array([wick_expectation(slots, [X * np.exp(1j * gaps * s), Y, w], ["ab", "cd", "ef"], N)
                     for s in t]) / Z
    N0 = np.diag(bose_function(spec.diagonal_part))
    x_free = np.trace(X @ N0.T)
    y_pert = wick_expectation([("a", "f"), ("c", "c"), ("a", "d"), ("c", "e")], [Y, w], ["cd", "ef"], N) / Z
    limit = x_free * y_pert
    fock_vals = None
    if fock:
        rho, space, tail = fock_gaussian_state(spec)
        _require_tail(tail)
        b = space.annihilators
        rho_B = sum(w[e, f] * (b[e].T @ rho @ b[f]) for e in range(n) for f in range(n) if w[e, f] != 0)
        rho_B = rho_B / np.trace(rho_B)
        Xf, Yf = space.quadratic(X), space.quadratic(Y)
        H = np.real(np.diag(space.quadratic(np.diag(spec.omegas))))
        fock_vals = np.array([np.trace((np.exp(1j * (H[:, None] - H[None, :]) * s) * Xf) @ Yf @ rho_B)
                              for s in t])
    return CorrelationResult(t, wick, fock_vals, limit, Z)


# ---------------------------------------------------------------- sectors

def _check_betas(*betas):
    for b in betas:
        if not b > 0:
            raise ValueError("inverse temperatures must be positive")


def sector_overlap(beta: float, beta2: float, omegas) -> float:
    """tr{Omega_beta^(1/2) Omega_beta2^(1/2)} for free bosons on the given mode energies."""
    _check_betas(beta, beta2)
    om = np.asarray(omegas, dtype=float)
    if beta == beta2:
        return 1.0
    bbar = 0.5 * (beta + beta2)
    expo = 2 * np.log(-np.expm1(-bbar * om)) - np.log(-np.expm1(-beta * om)) - np.log(-np.expm1(-beta2 * om))
    return float(np.exp(-0.5 * expo.sum()))


@dataclass
class QuadraticOperator:
    """c * 1 + sum_kk' L_kk' b_k^dagger b_k' acting on the leading modes of a grid."""

    scalar: complex
    matrix: np.ndarray

    def embedded(self, n_modes: int) -> np.ndarray:
        M = np.zeros((n_modes, n_modes), dtype=complex)
        k = self.matrix.shape[0]
        if k > n_modes:
            raise ValueError("operator acts on more modes than the grid has")
        M[:k, :k] = self.matrix
        return M


def thermal_expectation(op: QuadraticOperator, beta: float, omegas) -> complex:
    om = np.asarray(omegas, dtype=float)
    M = op.embedded(len(om))
    return op.scalar + np.sum(np.diag(M) * bose_function(beta * om))


def perturbed_sector_overlap(beta: float, beta2: float, op: QuadraticOperator, omegas) -> complex:
    """tr{L Omega_beta^(1/2) Omega_beta2^(1/2)} = overlap times <L> at the mean inverse temperature."""
    _check_betas(beta, beta2)
    return sector_overlap(beta, beta2, omegas) * thermal_expectation(op, 0.5 * (beta + beta2), omegas)


def fock_thermal_state(beta: float, omegas, n_max: int) -> tuple[np.ndarray, FockSpace]:
    space = FockSpace(len(omegas), n_max)
    spec = GaussianBathSpec(np.asarray(omegas, float), np.diag(beta * np.asarray(omegas, float)), n_max)
    rho, _, tail = fock_gaussian_state(spec, space)
    _require_tail(tail)
    return rho, space


def fock_sector_overlap(beta: float, beta2: float, omegas, n_max: int = 40,
                        op: QuadraticOperator | None = None) -> complex:
    """Brute-force tr{L Omega_beta^(1/2) Omega_beta2^(1/2)} on a truncated Fock space."""
    r1, space = fock_thermal_state(beta, omegas, n_max)
    r2, _ = fock_thermal_state(beta2, omegas, n_max)
    L = np.eye(space.dim, dtype=complex)
    if op is not None:
        L = op.scalar * L + space.quadratic(op.embedded(len(omegas)))
    # both states are diagonal in the occupation basis
    s1, s2 = np.sqrt(np.real(np.diag(r1))), np.sqrt(np.real(np.diag(r2)))
    return complex(np.trace(L @ np.diag(s1 * s2)))


# ---------------------------------------------------------------- diagonal projection

def truncated_moments(W: np.ndarray, n_max: int) -> tuple[np.ndarray, np.ndarray, float]:
    """<n>, <n^2> of single-mode thermal distributions p(n) ~ e^{-W n}, n <= n_max."""
    W = np.asarray(W, dtype=float)
    n = np.arange(n_max + 1)
    p = np.exp(-np.outer(W, n))
    p /= p.sum(axis=1, keepdims=True)
    tail = float(p[:, -1].max())
    return p @ n, p @ n**2, tail


@dataclass
class DiagonalProjectionResult:
    projected: complex
    factorized: complex
    residual: complex
    trace: complex


def diagonal_projection_demo(beta: float, w: np.ndarray, Y: np.ndarray, omegas, n_max: int = 60):
    """tr{Y P_D Omega~} versus <Y>_beta tr Omega~ for Omega~ = sum w_kk' b_k^dagger Omega_beta b_k'.

    Only the diagonals of w and Y enter; the difference comes from the
    <n_k^2> - <n_k>^2 terms of coinciding modes.
    """
    _check_betas(beta)
    om = np.asarray(omegas, dtype=float)
    n1, n2, tail = truncated_moments(beta * om, n_max)
    _require_tail(tail)
    y, wd = np.real_if_close(np.diag(Y)), np.real_if_close(np.diag(w))
    weight = wd * np.exp(beta * om)  # diagonal of L_B = sum w_kk' e^{beta omega_k'} b_k^dagger b_k'
    mean_Y = np.sum(y * n1)
    mean_L = np.sum(weight * n1)
    projected = mean_Y * mean_L + np.sum(y * weight * (n2 - n1**2))
    return DiagonalProjectionResult(projected, mean_Y * mean_L, projected - mean_Y * mean_L, mean_L)


def fock_diagonal_projection(beta: float, w: np.ndarray, Y: np.ndarray, omegas, n_max: int = 40) -> complex:
    """Brute-force tr{Y P_D Omega~} on a truncated Fock space."""
    rho, space = fock_thermal_state(beta, omegas, n_max)
    b = space.annihilators
    n = len(omegas)
    pert = sum(w[e, f] * (b[e].T @ rho @ b[f]) for e in range(n) for f in range(n) if w[e, f] != 0)
    return complex(np.sum(np.diag(space.quadratic(Y)) * np.diag(pert)))


def continuum_scaled(f, omegas) -> np.ndarray:
    """Matrix f(omega_k, omega_k') times the grid spacing (the 2 pi / box-length factor)."""
    om = np.asarray(omegas, dtype=float)
    step = float(np.min(np.diff(om)))
    return step * f(om[:, None], om[None, :])


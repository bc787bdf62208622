import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.linalg import expm_multiply

from vanhove.baths import gibbs_state
from vanhove.generator import prelimit_consistency_check
from vanhove.liouville import devectorize, hamiltonian_liouvillian, lift_superop_system, vectorize
from vanhove.models import SIGMA_Z, OpenSystemModel, random_admissible_model, reference_qubit_model
from vanhove.projection import (
    ModifiedFreeFlow,
    check_coupling_condition,
    decompose_liouvillian,
    initial_correlation_term,
    kernel_R,
    make_projector,
    memory_kernel,
    taylor_order,
)

from conftest import random_density


def _split(model):
    return make_projector(model.omega_B, model.dims, model.bath.H_B)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_projector_algebra(seed):
    m = random_admissible_model(np.random.default_rng(seed))
    sp = _split(m)
    P, Q = sp.P_matrix(), sp.Q_matrix()
    n = P.shape[0]
    assert np.abs(P @ P - P).max() < 1e-10
    assert np.abs(Q @ Q - Q).max() < 1e-10
    assert np.abs(P @ Q).max() < 1e-10
    assert np.abs(P + Q - np.eye(n)).max() < 1e-12
    L_S = lift_superop_system(hamiltonian_liouvillian(m.H_S), m.dims)
    assert np.abs(P @ L_S - L_S @ P).max() < 1e-10
    assert check_coupling_condition(m.H_int, sp) < 1e-10
    _, resid = decompose_liouvillian(m, 0.7, sp)
    assert resid < 1e-10


def test_apply_P_matches_matrix(rng):
    m = random_admissible_model(rng)
    sp = _split(m)
    X = random_density(rng, m.dims.D)
    assert np.allclose(vectorize(sp.apply_P(X)), sp.P_matrix() @ vectorize(X))


def test_projector_flags():
    m = reference_qubit_model(16)
    assert _split(m).reference_is_zero_eigenprojection
    wrong = np.zeros((17, 17), dtype=complex)
    wrong[0, 0] = wrong[1, 1] = wrong[0, 1] = wrong[1, 0] = 0.5
    sp = make_projector(wrong, m.dims, m.bath.H_B)
    assert not sp.reference_is_stationary
    with pytest.raises(ValueError):
        make_projector(np.eye(17), m.dims)


def test_uncentred_coupling_rejected(rng):
    m = random_admissible_model(rng)
    shifted = OpenSystemModel(m.H_S, m.bath, m.system_ops)
    shifted.bath.couplings = [m.bath.couplings[0] + np.eye(m.dims.d_B)]
    with pytest.raises(ValueError):
        decompose_liouvillian(shifted, 0.5, _split(shifted))


def _dense_modified(model, lam, sp):
    """L0' from the dense five-term pieces: L0 + lam Q L_SB Q."""
    terms, _ = decompose_liouvillian(model, lam, sp)
    return terms["P L_S P"] + terms["Q L0 Q"] + terms["lam Q L_SB Q"]


def test_matrix_free_apply_matches_dense(small_qubit_model, rng):
    m, lam = small_qubit_model, 0.3
    sp = _split(m)
    flow = ModifiedFreeFlow(m, sp, lam)
    M = _dense_modified(flow.model, lam, sp)
    X = rng.normal(size=(m.dims.D,) * 2) + 1j * rng.normal(size=(m.dims.D,) * 2)
    dense = devectorize(M @ vectorize(X))
    free = flow.from_eig(flow.apply(flow.to_eig(X)[None])[0])
    assert np.abs(dense - free).max() < 1e-12


def test_adjoint_pairing(small_qubit_model, rng):
    flow = ModifiedFreeFlow(small_qubit_model, _split(small_qubit_model), 0.4)
    D = flow.D
    X = rng.normal(size=(1, D, D)) + 1j * rng.normal(size=(1, D, D))
    Y = rng.normal(size=(1, D, D)) + 1j * rng.normal(size=(1, D, D))
    lhs = np.vdot(Y, flow.apply(X))
    rhs = np.vdot(flow.apply_adjoint(Y), X)
    assert abs(lhs - rhs) < 1e-11 * abs(lhs)


def test_taylor_route_matches_expm_multiply(rng):
    m = reference_qubit_model(40)
    flow = ModifiedFreeFlow(m, _split(m), 0.3)
    assert flow.D ** 2 > 4096
    D = flow.D
    X0 = rng.normal(size=(1, D, D)) + 0j
    h = 0.1 / flow.norm
    last = None
    for _, X in flow.trajectory(X0, 5, h):
        last = X
    op = flow.linear_operator()
    # linear_operator column-stacks the row-major internal arrays consistently with apply
    ref = expm_multiply(op * (5 * h), X0[0].reshape(-1, 1), traceA=0.0)
    assert np.abs(last[0].reshape(-1) - ref[:, 0]).max() < 1e-10


def test_taylor_order_and_step_guard(small_qubit_model):
    assert taylor_order(0.1) == 9
    assert taylor_order(1e-20) == 1
    flow = ModifiedFreeFlow(small_qubit_model, _split(small_qubit_model), 0.3)
    with pytest.raises(ValueError):
        flow.check_step(1.0 / flow.norm)


def test_kernel_R_zero_at_tau_zero(small_qubit_model):
    m = small_qubit_model
    omega_w = gibbs_state(m.bath.H_B, 2.0)
    for ref in (m.omega_B, omega_w):
        sp = make_projector(ref, m.dims, m.bath.H_B)
        probe = sp.apply_Q(np.kron(SIGMA_Z, m.omega_B))[None]
        flow = ModifiedFreeFlow(m, sp, 0.3)
        assert np.abs(kernel_R(0, 0.3, 0.0, flow, np.array([0.0]), probe, 0.01)).max() == 0


def test_correct_reference_annihilates_trivial_probe(small_qubit_model):
    m = small_qubit_model
    sp = _split(m)
    assert np.abs(sp.apply_Q(np.kron(SIGMA_Z, m.omega_B))).max() < 1e-15


def test_initial_correlation_term_vanishes_for_products(small_qubit_model):
    m = small_qubit_model
    sp = _split(m)
    flow = ModifiedFreeFlow(m, sp, 0.3)
    rho = np.kron(np.diag([1.0, 0.0]), m.omega_B).astype(complex)
    step = 0.1 / flow.norm
    assert np.abs(initial_correlation_term(0.3, 0.5, rho, flow, step)).max() < 1e-15
    assert np.abs(initial_correlation_term(0.3, 0.0, rho, flow, step)).max() == 0


def test_memory_kernel_bohr_selection(small_qubit_model):
    m = small_qubit_model
    flow = ModifiedFreeFlow(m, _split(m), 0.3)
    K = memory_kernel(1, 0, 0.3, 0.3, flow, 0.1 / flow.norm)
    assert K.shape == (4, 4)
    # the zero-frequency input/output sector: populations in, populations out
    assert np.abs(K[[1, 2]]).max() < 1e-14


def test_prelimit_identity_converges_quadratically(small_qubit_model):
    m = small_qubit_model
    sp = _split(m)
    from scipy.linalg import expm

    from vanhove.models import SIGMA_X

    xi = np.sin(np.pi * (m.bath.mode_energies - 0.5))
    xi /= np.linalg.norm(xi)
    U = expm(-0.3j * np.kron(SIGMA_X, m.bath.field_operator(xi)))
    rho0 = U @ np.kron(np.diag([1.0, 0.0]), m.omega_B) @ U.conj().T
    t_end = 0.45 / 0.09
    res = []
    for n in (155, 310):
        _, r = prelimit_consistency_check(m, 0.3, 0.45, sp, rho0, t_end / n, n_report=32)
        res.append(r.max())
    assert 3.5 < res[0] / res[1] < 4.5

import warnings

import numpy as np
import pytest
from scipy.linalg import expm

from vanhove.baths import (
    build_quasicontinuum_bath,
    build_two_temperature_bath,
    correlated_initial_state,
    gibbs_state,
    is_stationary,
    spectral_density,
)
from vanhove.liouville import CompositeDims, trace_norm
from vanhove.models import SIGMA_X, random_admissible_model, reference_qubit_model


def test_gibbs_state_limits():
    H = np.diag([0.0, 1.0, 2.0])
    assert np.allclose(gibbs_state(H, np.inf), np.diag([1, 0, 0]))
    assert np.allclose(gibbs_state(H, 0.0), np.eye(3) / 3)
    p = np.exp(-np.array([0.0, 1.0, 2.0]))
    assert np.allclose(np.diag(gibbs_state(H, 1.0)), p / p.sum())
    with pytest.raises(ValueError):
        gibbs_state(H, -1.0)


def test_bath_metadata_for_64_flat_modes():
    bath = build_quasicontinuum_bath(64, (0.5, 1.5))
    assert bath.d_B == 65
    assert bath.delta_omega == pytest.approx(1.0 / 63)
    assert bath.recurrence_time == pytest.approx(2 * np.pi * 63)
    assert bath.bandwidth == pytest.approx(1.0)
    # weights reproduce J * spacing
    assert np.allclose(bath.mode_weights**2, 0.1 / 63)


def test_coupling_is_centred_and_reference_stationary():
    for beta in (np.inf, 3.0):
        bath = build_quasicontinuum_bath(32, (0.5, 1.5), beta=beta)
        B = bath.couplings[0]
        assert abs(np.trace(B @ bath.omega_B)) < 1e-14
        assert is_stationary(bath)


def test_small_bath_warns_and_full_fock_refused():
    with pytest.warns(UserWarning):
        build_quasicontinuum_bath(8, (0.5, 1.5))
    with pytest.raises(ValueError):
        build_quasicontinuum_bath(64, (0.5, 1.5), single_excitation=False)


def test_spectral_density_shapes():
    w = np.array([0.5, 1.0])
    assert np.allclose(spectral_density("flat", w, 0.1), 0.1)
    assert np.allclose(spectral_density("ohmic", w, 1.0, 1.0), w * np.exp(-w))
    with pytest.raises(ValueError):
        spectral_density("lorentz", w, 1.0)


def test_two_temperature_populations():
    bath = build_two_temperature_bath(8, 1.0, 8, 3.0, (0.5, 1.5))
    pops = np.real(np.diag(bath.omega_B))
    assert pops.sum() == pytest.approx(1.0)
    ratio_1 = pops[1] / pops[0]
    ratio_2 = pops[9] / pops[0]
    assert ratio_1 == pytest.approx(np.exp(-0.5))
    assert ratio_2 == pytest.approx(np.exp(-1.5))
    assert is_stationary(bath)


def test_correlated_state_split():
    model = reference_qubit_model(32)
    b = model.bath
    xi = np.ones(32) / np.sqrt(32)
    U = expm(-0.3j * np.kron(SIGMA_X, b.field_operator(xi)))
    st = correlated_initial_state([U], b.omega_B, model.dims, np.diag([1.0, 0.0]))
    assert np.trace(st.rho) == pytest.approx(1.0)
    assert st.correlation_norm > 0.1
    assert np.allclose(st.rho, np.kron(st.rho_S, st.rho_B) + st.delta)
    # the identity factor leaves the product untouched
    plain = correlated_initial_state([np.eye(model.dims.D)], b.omega_B, model.dims, np.diag([1.0, 0.0]))
    assert plain.correlation_norm < 1e-14 and plain.q_part_norm < 1e-14


def test_correlated_state_rejects_zero_trace():
    dims = CompositeDims(2, 2)
    with pytest.raises(ValueError):
        correlated_initial_state([np.zeros((4, 4))], np.eye(2) / 2, dims)


def test_field_and_hopping_operators_hermitian():
    b = build_quasicontinuum_bath(16, (0.5, 1.5))
    f = np.linspace(0, 1, 16)
    assert np.allclose(b.field_operator(f), b.field_operator(f).conj().T)
    h = b.hopping_operator(f, f[::-1])
    assert np.allclose(h, h.conj().T)
    assert np.all(h[0] == 0)


def test_random_admissible_models_are_admissible(rng):
    for _ in range(5):
        m = random_admissible_model(rng)
        assert is_stationary(m.bath)
        assert abs(np.trace(m.bath.couplings[0] @ m.omega_B)) < 1e-12


def test_with_bath_size_keeps_parameters():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = reference_qubit_model(16)
    m2 = m.with_bath_size(32)
    assert m2.bath.n_modes == 32 and m2.bath.meta["band"] == m.bath.meta["band"]
    assert trace_norm(m2.H_S - m.H_S) == 0

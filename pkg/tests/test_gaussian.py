import numpy as np
import pytest

from vanhove.gaussian import (
    FockSpace,
    GaussianBathSpec,
    QuadraticOperator,
    bose_function,
    continuum_scaled,
    diagonal_projection_demo,
    fock_diagonal_projection,
    fock_sector_overlap,
    mixing_correlation_gaussian,
    perturbed_sector_overlap,
    sector_overlap,
    thermal_expectation,
    two_point_function,
    wick_expectation,
)
from vanhove.models import random_hermitian


def _positive(rng, n, shift=1.0):
    A = random_hermitian(rng, n, 0.2)
    return A + shift * np.eye(n)


def test_bose_function():
    assert bose_function(np.log(2.0)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        bose_function(0.0)


def test_two_point_fock_equals_closed_form(rng):
    W = _positive(rng, 2, 2.0)
    spec = GaussianBathSpec(np.array([1.0, 1.5]), W, n_max=20)
    assert np.abs(two_point_function(spec, "fock") - two_point_function(spec, "closed")).max() < 1e-10


def test_two_point_first_order_divided_differences(rng):
    # oracle: Daleckii-Krein first-order expansion of f(W) = 1/(e^W - 1) around a diagonal W0
    w0 = np.array([0.8, 1.3, 2.1])
    V = random_hermitian(rng, 3)
    f = lambda x: 1.0 / np.expm1(x)
    fp = lambda x: -np.exp(x) / np.expm1(x) ** 2
    dd = np.where(np.isclose(w0[:, None], w0[None, :]), fp(w0)[:, None] * np.ones(3),
                  (f(w0)[:, None] - f(w0)[None, :]) / np.where(np.isclose(w0[:, None], w0[None, :]), 1,
                                                                  w0[:, None] - w0[None, :]))
    errs = []
    for eps in (1e-2, 5e-3):
        spec = GaussianBathSpec(w0, np.diag(w0) + eps * V)
        first = np.diag(f(w0)) + eps * dd * V
        errs.append(np.abs(two_point_function(spec, "closed") - first).max())
    assert errs[1] < 0.3 * errs[0]  # second-order remainder
    assert errs[0] < 1e-3


def test_wick_vacuum_and_odd_products():
    N = np.zeros((2, 2))
    one = np.ones(2)
    # <0| b b^dagger |0> summed over unit weights = number of modes
    assert wick_expectation([("a", "x"), ("c", "y")], [np.eye(2)], ["xy"], N) == pytest.approx(2.0)
    assert wick_expectation([("a", "x")], [one], ["x"], N) == 0.0


@pytest.mark.parametrize("n", [2, 3])
def test_wick_matches_fock(rng, n):
    om = 1.2 + 0.5 * np.arange(n)
    spec = GaussianBathSpec.thermal(om, 2.0, n_max=16)
    X, Y, w = (random_hermitian(rng, n) for _ in range(3))
    res = mixing_correlation_gaussian(spec, X, Y, w @ w.conj().T, np.linspace(0, 5, 6))
    assert np.abs(res.wick - res.fock).max() < 1e-8


def test_mixing_correlation_refuses_large_fock():
    spec = GaussianBathSpec.thermal(np.linspace(1, 2, 5), 1.0)
    with pytest.raises(ValueError):
        mixing_correlation_gaussian(spec, np.eye(5), np.eye(5), np.eye(5), [0.0], fock=True)
    with pytest.raises(ValueError):
        FockSpace(5, 2)


def test_fock_tail_guard():
    spec = GaussianBathSpec.thermal([0.1, 0.2], 1.0, n_max=4)
    with pytest.raises(ValueError):
        two_point_function(spec, "fock")


def test_sector_overlap_equal_and_decreasing():
    om = np.linspace(0.5, 1.5, 8)
    assert sector_overlap(1.0, 1.0, om) == 1.0
    vals = [sector_overlap(1.0, 2.0, np.linspace(0.5, 1.5, n)) for n in (2, 4, 8, 16, 32)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        sector_overlap(-1.0, 1.0, om)


@pytest.mark.parametrize("om", [[0.5], [0.5, 1.5]])
def test_sector_overlap_matches_fock(om):
    assert sector_overlap(1.0, 2.0, om) == pytest.approx(fock_sector_overlap(1.0, 2.0, om, 48).real, abs=1e-8)


def test_perturbed_overlap_matches_fock(rng):
    om = [0.5, 1.5]
    op = QuadraticOperator(0.3, random_hermitian(rng, 2))
    ref = fock_sector_overlap(1.0, 2.0, om, 48, op)
    assert abs(perturbed_sector_overlap(1.0, 2.0, op, om) - ref) < 1e-8
    assert perturbed_sector_overlap(1.0, 1.0, op, om) == pytest.approx(thermal_expectation(op, 1.0, om))


def test_diagonal_projection_demo_matches_fock(rng):
    om = np.array([0.9, 1.4])
    w = random_hermitian(rng, 2)
    Y = random_hermitian(rng, 2)
    res = diagonal_projection_demo(1.5, w, Y, om)
    assert abs(res.projected - fock_diagonal_projection(1.5, w, Y, om, 40)) < 1e-8


def test_diagonal_projection_residual_halves():
    res = []
    for n in (32, 64, 128):
        om = np.linspace(0.5, 1.5, n)
        w = continuum_scaled(lambda a, b: np.exp(-((a - 1) ** 2 + (b - 1) ** 2)), om)
        Y = continuum_scaled(lambda a, b: np.cos(a - b), om)
        res.append(abs(diagonal_projection_demo(1.0, w, Y, om).residual))
    for a, b in zip(res, res[1:]):
        assert 0.4 <= b / a <= 0.6


def test_continuum_scaled_uses_spacing():
    om = np.array([0.0, 0.5, 1.0])
    assert np.allclose(continuum_scaled(lambda a, b: np.ones_like(a * b), om), 0.5)


def test_spec_validation():
    with pytest.raises(ValueError):
        GaussianBathSpec([1.0, 2.0], np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        GaussianBathSpec([1.0, 2.0], np.array([[1.0, 1j], [1j, 1.0]]))
    with pytest.raises(ValueError):
        GaussianBathSpec.thermal([1.0], -1.0)

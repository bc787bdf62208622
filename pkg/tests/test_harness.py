import math
import warnings

import numpy as np
import pytest

from vanhove.config import ConfigError, config_from_dict
from vanhove.generator import WindowError
from vanhove.harness import (
    CSV_HEADER,
    ExperimentRecord,
    NumericalError,
    build_model,
    check_records,
    fit_exponent,
    initial_state,
    observable_battery,
    plateau_onset,
    records_to_csv,
    records_to_json,
    run_convergence_sweep,
    run_correlation_decay,
    run_experiments,
    run_factorization_check,
    run_free_factorization,
    run_secular_divergence,
    validate_window,
    weak_values,
)
from vanhove.liouville import partial_trace_bath, trace_norm

from small_config import SMALL

warnings.filterwarnings("ignore", message=".*recommended.*")


@pytest.fixture(scope="module")
def cfg():
    return config_from_dict(SMALL)


def _values(records, experiment, metric):
    return {(r.lam, r.tau): r.value for r in records if r.experiment == experiment and r.metric == metric}


def test_record_validation():
    with pytest.raises(ValueError):
        ExperimentRecord("x", 0.1, 0.0, "made_up", 1.0, "f")
    with pytest.raises(NumericalError):
        ExperimentRecord("x", 0.1, 0.0, "floor", math.nan, "f")
    ExperimentRecord("x", 0.1, 0.0, "q_part:x1", 1.0, "f")


def test_initial_state_properties(cfg):
    m = build_model(cfg)
    rho = initial_state(cfg, m)
    assert np.trace(rho) == pytest.approx(1.0)
    assert np.linalg.eigvalsh(rho)[0] > -1e-12
    delta = rho - np.kron(partial_trace_bath(rho, m.dims), m.omega_B)
    assert trace_norm(delta) > 0.1
    prod = initial_state(cfg, m, factorized=True)
    assert np.allclose(partial_trace_bath(prod, m.dims), partial_trace_bath(rho, m.dims))


def test_battery_is_seeded_and_hermitian(cfg):
    m = build_model(cfg)
    a, b = observable_battery(cfg, m), observable_battery(cfg, m)
    assert len(a) == 9
    for (la, A, X), (lb, B, Y) in zip(a, b):
        assert la == lb and np.array_equal(X, Y)
        assert np.allclose(X, X.conj().T)


def test_bath_trivial_observables_blind_to_q_part(cfg, rng):
    m = build_model(cfg)
    rho = initial_state(cfg, m)
    q = rho - np.kron(partial_trace_bath(rho, m.dims), m.omega_B)
    battery = [("t", np.diag([1.0, -1.0]), np.eye(m.dims.d_B))]
    assert weak_values(q, battery, 2)[0] < 1e-14


def test_window_validated_before_compute(cfg):
    bad = config_from_dict({**SMALL, "lambdas": [0.2, 0.05]})
    with pytest.raises(WindowError):
        validate_window(bad, ["converge"])
    with pytest.raises(WindowError):
        run_convergence_sweep(bad)
    with pytest.raises(ConfigError):
        validate_window(config_from_dict({**SMALL, "correlation": {"taus": [0.3, 0.5]}}), ["correlation"])


def test_zero_coupling_gives_zero_distance():
    # lambda L_SB = 0: a zero-strength bath leaves K = 0 and the exact dynamics frozen
    c = config_from_dict({**SMALL, "model": {"bath": {"n_modes": 32, "strength": 0.0}},
                          "rho0": {"factorized": True}})
    recs = run_convergence_sweep(c)
    assert max(r.value for r in recs if r.metric == "trace_distance") < 1e-12


def test_convergence_records(cfg):
    recs = run_convergence_sweep(cfg)
    d = _values(recs, "converge", "trace_distance")
    assert len(d) == 4 * 3
    assert all(v < 1e-12 for (lam, tau), v in d.items() if tau == 0)
    assert len(_values(recs, "converge", "floor")) == 1
    assert len(_values(recs, "converge-factorized", "max_trace_distance")) == 4


def test_correlation_records(cfg):
    recs = run_correlation_decay(cfg)
    v = _values(recs, "correlation", "correlation_norm")
    assert len(v) == 8 and all(x > 0 for x in v.values())
    prod = config_from_dict({**SMALL, "rho0": {"factorized": True}})
    assert max(r.value for r in run_correlation_decay(prod)) < 1e-14


def test_secular_records_and_zero_tau(cfg):
    recs = run_secular_divergence(cfg)
    exps = {r.experiment for r in recs}
    assert exps == {"secular:correct", "secular:wrong-mismatched-temperature"}
    from vanhove.harness import _secular_cell

    for which in ("correct", "wrong-mismatched-temperature", "wrong-nonstationary"):
        assert _secular_cell(cfg, which, 0.5, 0.0) == 0.0


def test_fit_exponent():
    lams = np.array([0.4, 0.2, 0.1, 0.05])
    assert fit_exponent(lams, 3.0 / lams**2) == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        fit_exponent(lams[:3], lams[:3])


def test_factorization_records(cfg):
    recs = run_factorization_check(cfg)
    trivial = _values(recs, "factorize", "q_part_bath_trivial")
    assert max(trivial.values()) < 1e-12
    assert len(_values(recs, "factorize", "q_part:x1")) == 12


def test_free_run_records(cfg):
    recs = run_free_factorization(cfg)
    d = _values(recs, "free", "free_distance")
    assert all(lam == 0.0 for lam, _ in d)
    assert max(_values(recs, "free", "free_distance_bath_trivial").values()) < 1e-12
    prod = config_from_dict({**SMALL, "rho0": {"factorized": True}})
    assert max(_values(run_free_factorization(prod), "free", "free_distance").values()) < 1e-14


def test_plateau_onset():
    t = np.arange(5.0)
    assert plateau_onset(t, np.array([1.0, 0.5, 0.01, 0.02, 0.01]), 0.05) == 2.0
    assert plateau_onset(t, np.array([1.0, 0.5, 0.01, 0.2, 0.3]), 0.05) is None


def test_csv_format():
    r = [ExperimentRecord("b", 0.1, 0.5, "floor", 1 / 3, "abc"),
         ExperimentRecord("a", 0.2, 0.0, "floor", 2.0, "abc")]
    text = records_to_csv(r)
    lines = text.split("\n")
    assert lines[0] == CSV_HEADER
    assert lines[1] == "a,0.20000000000000001,0,floor,2,abc"
    assert lines[2] == "b,0.10000000000000001,0.5,floor,0.33333333333333331,abc"
    assert text.endswith("\n") and "\r" not in text
    assert '"lambda": 0.2' in records_to_json(r)


def test_order_independence(cfg):
    recs = run_experiments(cfg, ["free"])
    assert records_to_csv(recs) == records_to_csv(list(reversed(recs)))


def test_checks_report_every_experiment(cfg):
    recs = run_experiments(cfg, ["free", "appendix"])
    names = [c.name for c in check_records(recs, cfg)]
    assert any(n.startswith("free") for n in names) and any(n.startswith("appendix") for n in names)

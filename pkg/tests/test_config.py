import math

import pytest

from vanhove.config import ConfigError, ExperimentConfig, config_from_dict, load_config


def test_defaults_validate():
    cfg = load_config(None)
    assert cfg.lambdas == [0.4, 0.2, 0.1, 0.05]
    assert cfg.model.bath.beta == math.inf
    assert len(cfg.tau_grid) == 31 and cfg.tau_grid[-1] == 3.0


def test_toml_round_trip(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("""
lambdas = [0.5, 0.25]
tau_grid = [0.0, 1.0]
seed = 7
reference = "correct"

[model.bath]
n_modes = 48
beta = inf

[[rho0.factors]]
system_op = "y"
angle = 0.2
profile = "flat"

[kernel]
method = "resolvent"
eta = 2
""")
    cfg = load_config(p)
    assert cfg.model.bath.n_modes == 48 and cfg.model.bath.beta == math.inf
    assert cfg.rho0.factors[0].system_op == "y"
    assert cfg.kernel.eta == 2.0 and isinstance(cfg.kernel.eta, float)
    assert cfg.seed == 7


@pytest.mark.parametrize("data", [
    {"lambda": [0.1]},
    {"model": {"bath": {"modes": 3}}},
    {"lambdas": [0.1, 0.2]},
    {"lambdas": [0.2, 0.2]},
    {"tau_grid": [1.0, 0.5]},
    {"reference": "sideways"},
    {"kernel": {"step": 0.5}},
    {"model": {"bath": {"n_modes": 3.5}}},
    {"rho0": {"factors": [{"system_op": "w"}]}},
    {"seed": -1},
    {"output": {"format": "xml"}},
])
def test_invalid_configs_rejected(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_malformed_file(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("lambdas = [0.1,")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_fingerprint_tracks_numbers_not_output():
    a = ExperimentConfig()
    b = config_from_dict({"output": {"dir": "elsewhere"}})
    c = config_from_dict({"seed": 1})
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != c.fingerprint()

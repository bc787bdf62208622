"""A configuration small enough to exercise every runner in seconds."""

SMALL = {
    "lambdas": [0.8, 0.6, 0.5, 0.4],
    "tau_grid": [0.0, 0.5, 1.0],
    "model": {"bath": {"n_modes": 32}},
    "correlation": {"n_modes": 32, "taus": [0.5, 1.0]},
    "secular": {"n_modes": 32, "tau": 0.5},
    "free": {"n_modes": 32, "n_times": 9},
    "convergence": {"floor_factor": 2},
    "appendix": {"overlap_modes": [2, 4], "projection_modes": [16, 32], "cesaro_horizons": [20.0, 40.0]},
}

SMALL_TOML = """
lambdas = [0.8, 0.6, 0.5, 0.4]
tau_grid = [0.0, 0.5, 1.0]

[model.bath]
n_modes = 32

[correlation]
n_modes = 32
taus = [0.5, 1.0]

[secular]
n_modes = 32
tau = 0.5

[free]
n_modes = 32
n_times = 9

[appendix]
overlap_modes = [2, 4]
projection_modes = [16, 32]
cesaro_horizons = [20.0, 40.0]
"""

"""
Reduced dynamics against the Davies semigroup
=============================================

A qubit sits on a 48-mode band at zero temperature. We start from a state
that is correlated with the bath, evolve the full Hamiltonian exactly, and
compare the reduced state (rescaled time tau = lam^2 t, interaction picture)
with the semigroup exp(K tau). The gap should shrink as lam does, down to a
floor set by the finite bath.
"""

import numpy as np

from vanhove.config import ExperimentConfig
from vanhove.generator import ScaledDynamics, solve_master_equation
from vanhove.harness import build_model, generator_for, initial_state
from vanhove.liouville import partial_trace_bath, partial_trace_system, trace_distance, trace_norm

cfg = ExperimentConfig().validate()
model = build_model(cfg, 48)
rho0 = initial_state(cfg, model)

# %% How correlated is the start?
dims = model.dims
product = np.kron(partial_trace_bath(rho0, dims), partial_trace_system(rho0, dims))
print(f"trace norm of rho0 - rho_S x rho_B: {trace_norm(rho0 - product):.3f}")

# %% The limiting generator (time-integral kernel, cut at a quarter of the recurrence time)
gen = generator_for(cfg, model)
sigma0 = partial_trace_bath(rho0, dims)
taus = np.linspace(0.0, 2.0, 11)
K_tau = solve_master_equation(gen, sigma0, taus)

# %% Exact dynamics for a few couplings
print("lam    max_tau ||rho_S(tau) - exp(K tau) rho_S(0)||")
for lam in (0.4, 0.2, 0.1):
    exact = ScaledDynamics(model, lam, rho0).states(taus)
    d = max(trace_distance(a, b) for a, b in zip(exact, K_tau))
    print(f"{lam:<6} {d:.4f}")

# %% Excited population along the way, exact at lam = 0.1 vs semigroup
exact = ScaledDynamics(model, 0.1, rho0).states(taus)
for t, a, b in zip(taus, exact, K_tau):
    print(f"tau {t:4.1f}   exact {a[0, 0].real:.4f}   semigroup {b[0, 0].real:.4f}")

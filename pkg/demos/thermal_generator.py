"""
Davies generator for a thermal band
===================================

Two routes to the same weak-coupling generator: a truncated time integral of
the bath correlation and a Lorentzian-regularized resolvent. For a bath at
inverse temperature beta the down/up rate ratio should approach exp(beta * splitting),
and the stationary state of K should be the system Gibbs state.
"""

import numpy as np

from vanhove.generator import davies_generator, relative_difference
from vanhove.liouville import hamiltonian_liouvillian
from vanhove.models import reference_qubit_model
from vanhove.projection import make_projector

beta = 3.0
model = reference_qubit_model(256, beta=beta)
split = make_projector(model.omega_B, model.dims, model.bath.H_B)
eta = 3 * model.bath.delta_omega

integral = davies_generator(model, split, "time-integral")
resolvent = davies_generator(model, split, "resolvent", eta=eta)

# %% Both commute with the free system Liouvillian
L_S = hamiltonian_liouvillian(model.H_S)
for gen in (integral, resolvent):
    print(f"{gen.method:14s} ||[K, L_S]|| = {np.abs(gen.K @ L_S - L_S @ gen.K).max():.1e}")

# %% Rates in the sigma_z basis (column-stacked: index 0 is |0><0|, index 3 is |1><1|)
for gen in (integral, resolvent):
    down, up = gen.K[3, 0].real, gen.K[0, 3].real
    print(f"{gen.method:14s} down {down:.4e}  up {up:.4e}  ratio {down / up:.2f}")
print(f"exp(beta) = {np.exp(beta):.2f}")

# %% Stationary state against the Gibbs state of H_S
w = np.exp(-beta * np.diag(model.H_S).real)
print("Gibbs populations     ", np.round(w / w.sum(), 4))
print("stationary (integral) ", np.round(np.diag(integral.stationary_state()).real, 4))

# %% The two routes agree better as the band gets denser
for n in (128, 256, 512):
    m = reference_qubit_model(n)
    sp = make_projector(m.omega_B, m.dims, m.bath.H_B)
    diff = relative_difference(davies_generator(m, sp, "time-integral"),
                               davies_generator(m, sp, "resolvent", eta=3 * m.bath.delta_omega))
    print(f"N = {n:3d}: relative difference {diff:.4f}")

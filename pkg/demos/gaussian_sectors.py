"""
Thermal sectors of a many-mode bath
===================================

Two Gibbs states of a quasi-free bath at different temperatures look
nearly identical mode by mode, yet their fidelity-type overlap shrinks
geometrically with the number of modes. The closed form below is checked
against a brute-force Fock-space computation on a few modes.
"""

import numpy as np

from vanhove.gaussian import fock_sector_overlap, sector_overlap

beta, beta2 = 1.0, 2.0

# %% Fixed band [0.5, 1.5], more and more modes
for n in (2, 4, 8, 16, 32, 64):
    omegas = np.linspace(0.5, 1.5, n)
    print(f"{n:3d} modes: overlap {sector_overlap(beta, beta2, omegas):.5f}")

# %% Equal temperatures overlap perfectly
print("same beta:", sector_overlap(beta, beta, np.linspace(0.5, 1.5, 64)))

# %% Closed form against a truncated Fock space
omegas = np.array([0.5, 1.5])
closed = sector_overlap(beta, beta2, omegas)
brute = fock_sector_overlap(beta, beta2, omegas, 48).real
print(f"two modes: closed form {closed:.12f}, Fock {brute:.12f}, |diff| {abs(closed - brute):.1e}")

"""
Exponential moments of path energy
==================================

The Khasminskii argument turns a small-time bound on
``E int |u|^2(a + sigma B_s) ds`` into a bound on its exponential moment.
"""

import numpy as np

from roughflow.estimators import bump_first_moment_exact, khasminskii_functional, path_energy
from roughflow.fields import smooth_bump
from roughflow.rng import BrownianLattice

bump = smooth_bump(1, amplitude=1.0, width=0.5)

###############################################################################
# First moment against the exact continuous-time value; the left Riemann sum
# converges as dt shrinks.
exact = bump_first_moment_exact(1.0, 0.5, [0.0], 1.0, 1.0)
for dt in (0.02, 0.01, 0.005):
    lat = BrownianLattice(dt, int(round(1 / dt)), 1, seed=5, n_paths=10_000)
    F = path_energy(bump, lat, [[0.0]], 1.0, 1.0)[:, 0]
    print(f"dt={dt}: E int|u|^2 = {F.mean():.4f} +- {F.std(ddof=1) / np.sqrt(F.size):.4f}  (exact {exact:.4f})")

###############################################################################
# Exponential moments grow with lambda and dominate exp(lambda m1).
lat = BrownianLattice(0.005, 200, 1, seed=6, n_paths=10_000)
for lam in (0.5, 1.0, 2.0, 4.0):
    k = khasminskii_functional(bump, lat, [[0.0]], lam, 1.0, 1.0)
    print(f"lambda={lam}: E exp = {k.exponential.estimate:.4f}, exp(lambda m1) = {np.exp(lam * k.first_moment.estimate):.4f}")

#!/usr/bin/env python3
"""Three ways to turn prior samples into posterior samples for a linear Gaussian observation.

The exact Kalman update gives the target moments. The optimal transport map
moves each particle deterministically; the EnKF adds a perturbed observation.
Both should land on the posterior moments up to Monte Carlo error.
"""

import numpy as np

from fpflab import GaussianBelief, RngStream, sample_gaussian
from fpflab.coupling import enkf_particle_update, kalman_update, ot_particle_update

rng = RngStream(7)
prior = GaussianBelief([0.0, 1.0], [[1.0, 0.3], [0.3, 0.5]])
H, y, obs_var = [1.0, 0.0], 0.8, 0.25

exact = kalman_update(prior, H, y, obs_var)
x0 = sample_gaussian(prior, 10_000, rng.child(0))
ot = ot_particle_update(x0, H, y, obs_var)
enkf = enkf_particle_update(x0, H, y, rng.child(1), obs_var)

np.set_printoptions(precision=4, suppress=True)
print("exact mean", exact.mean, "\nexact cov\n", exact.cov)
for label, e in (("ot", ot), ("enkf", enkf)):
    x = e.particles
    print(f"\n{label} mean", x.mean(axis=0), f"\n{label} cov\n", np.cov(x.T))

# The OT map is deterministic: the same prior ensemble always gives the same posterior ensemble.
assert np.array_equal(ot.particles, ot_particle_update(x0, H, y, obs_var).particles)

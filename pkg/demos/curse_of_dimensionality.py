#!/usr/bin/env python3
"""Particle filter versus feedback particle filter as the state dimension grows.

Both filters estimate a static Gaussian state from one second of noisy
observations. The PF reweights prior samples and resamples once; the FPF moves
its particles with a feedback gain. The PF error climbs steeply with ``d``
while the FPF error grows only polynomially.
"""

from fpflab import RngStream
from fpflab.experiments import cod_benchmark

report = cod_benchmark(dims=[1, 2, 4, 8], Ns=[200], trials=200, rng=RngStream(11), threads=0)

print(f"{'filter':>6} {'d':>3} {'N':>5} {'mse':>10} {'stderr':>10} {'mse*N':>8}")
for r in report.where():
    print(f"{r['filter']:>6} {r['d']:>3} {r['N']:>5} {r['mse']:10.4g} {r['stderr']:10.2g} {r['mse_N']:8.3f}")

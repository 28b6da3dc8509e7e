#!/usr/bin/env python3
"""Tracking an epidemic and its infection rate from noisy daily counts.

The state is ``(S, I, beta)`` with ``beta`` following a random walk. The
observation is the number of new infections plus noise. Run both gain
backends on the same simulated outbreak and print a few snapshots.
"""

from fpflab import RngStream
from fpflab.experiments import sir_demo

report = sir_demo(RngStream(21), horizon=100)

for backend in ("constant", "diffusion_map"):
    print(f"\n{backend}")
    print(f"{'t':>5} {'I':>8} {'est_I':>8} {'beta':>7} {'est_beta':>9} {'std_beta':>9}")
    for r in report.where(backend=backend):
        if r["t"] % 20 == 0:
            print(f"{r['t']:5.0f} {r['truth_I']:8.4f} {r['est_I']:8.4f} {r['truth_beta']:7.3f} "
                  f"{r['est_beta']:9.3f} {r['std_beta']:9.3f}")

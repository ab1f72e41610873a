"""Optimize the coupler rotations for one random channel and compare with baselines.

Prints the rate of each scheme, then the refinement trace of the rotatable
coupler array: objective (log of the normalized gain), rate, the
conditional-gradient gap and the accepted step.
"""

import math
import sys

import numpy as np

from rcasim.beamforming import achievable_rate_from_snr
from rcasim.harness import SCHEMES, SystemConfig, build_scenario, generate_channel, run_scheme

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
config = SystemConfig(N=3)
scenario = build_scenario(config, generate_channel(config, seed))
scale = scenario.transmit_power / scenario.noise_power

runs = {name: run_scheme(name, scenario, config, seed) for name in SCHEMES}
print(f"seed {seed}, N = {config.N}, L = {config.num_paths}, P = {config.transmit_power} dBm")
for name, run in runs.items():
    print(f"  {name:30s} {run.rate(scale):7.3f} bits/s/Hz")

trace = runs["rca"].trace
print(f"\nrefinement from the {trace.init_source} start, stopped by {trace.stop_reason!r} "
      f"after {trace.iterations} steps, {trace.evaluations} objective evaluations")
print(" iter   objective      rate     gap        step")
for rec in trace.records[:15]:
    step = "-" if rec.step is None else f"{rec.step:.3g}"
    r = achievable_rate_from_snr(scale * math.exp(rec.objective))
    print(f"{rec.iteration:5d}  {rec.objective:10.5f}  {r:8.4f}  {rec.gap:9.2e}  {step}")
if len(trace.records) > 15:
    print(f"  ... {len(trace.records) - 15} more")

U = trace.U_star
print("\noptimized axes (polar angle from z, degrees):",
      np.round(np.degrees(np.arccos(np.clip(U[:, 2], -1, 1))), 1))

"""A small transmit-power sweep through the experiment harness.

Runs all four schemes on a handful of seeds, writes the CSV files and the
manifest to a directory, and prints the mean rate table.
"""

import sys
import tempfile
from pathlib import Path

from rcasim.harness import SCHEMES, SystemConfig, run_experiment

out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="rca_power_"))
config = SystemConfig()
out = run_experiment(config, "power", seeds=range(4), out_dir=out_dir)

for s in SCHEMES:
    print(f"{s:30s}" + "".join(f"{out.results[p, s].mean_rate:8.3f}" for p in out.values))
print(f"{'P (dBm)':30s}" + "".join(f"{p:8.0f}" for p in out.values))
print("\nfiles:", ", ".join(str(out_dir / f) for f in out.files))

"""A one-floor building over a day under all three strategies.

Run: python3 demos/04_closed_loop_comparison.py [out_dir]

Writes each run's trace, timing, plot data and metrics plus a comparison
table to ``out_dir`` (default ``demo-out``).
"""

import sys
from pathlib import Path

from pwadmpc.sim import Scenario, compare_strategies, write_comparison_csv

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out")
scenario = Scenario.default(name="one-floor", topology={"floors": 1, "zones_per_floor": 4})
rows = compare_strategies(scenario, ["distributed-pwa", "centralized-pwa", "centralized-linear"], out_dir=out)
write_comparison_csv(out / "comparison.csv", rows)

print(f"{'strategy':20s} {'power (W)':>10s} {'cost (CNY)':>10s} {'median PMV':>10s} {'seq. time (s)':>13s}")
for r in rows:
    print(f"{r['strategy']:20s} {r['avg_power_w']:10.2f} {r['total_cost_cny']:10.3f} "
          f"{r['pmv_median']:10.3f} {r['max_sequential_s']:13.2f}")
print("\nWith four zones the local solves are too small for the distributed sequential time to win;")
print("the advantage appears on the 36-zone default (pwadmpc compare).")
print(f"files in {out}/")

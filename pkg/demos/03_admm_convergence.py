"""Jacobi ADMM on six zones sharing a tight power budget.

Run: python3 demos/03_admm_convergence.py
"""

import numpy as np

from pwadmpc.admm import AdmmConfig, run_admm
from pwadmpc.qp import BoxQp

rng = np.random.default_rng(0)
M, N = 6, 8
costs = []
for _ in range(M):
    Q, _ = np.linalg.qr(rng.normal(size=(N, N)))
    H = Q @ np.diag(rng.uniform(1, 10, N)) @ Q.T
    H = 0.5 * (H + H.T)
    target = rng.uniform(400, 1800, N)  # each zone's preferred input (W)
    costs.append(BoxQp(H, -H @ target, 0.0, 2000.0))

c_max = 4000.0  # well below what the zones want together
for z_from in ("current", "previous"):
    run = run_admm(costs, np.zeros((M, N)), AdmmConfig(max_iter=400, tol=1e-4, z_from=z_from), c_max=c_max)
    total = run.state.u.sum(axis=0)
    print(f"z from {z_from:8s}: {len(run.log):3d} iterations, final residual {run.state.r:.1e}, "
          f"peak total {total.max():.1f} W of {c_max:.0f} W")

print(f"\nresidual history (z from {z_from}):\n tau  residual")
for tau, r, obj, viol in run.log[:: max(1, len(run.log) // 10)]:
    print(f"{tau:4d}  {r:.3e}")

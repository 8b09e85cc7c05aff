"""Fit the four-region comfort surrogate and see where it is accurate.

Run: python3 demos/01_comfort_surrogate.py
"""

import numpy as np

from pwadmpc.comfort import ComfortParams, fit_pwa, pmv_exact, pmv_pwa

summer = ComfortParams.summer()
model = fit_pwa(summer)
r = model.report
print(f"summer fit on a {int(np.sqrt(r.grid_size))}x{int(np.sqrt(r.grid_size))} grid: "
      f"MAE={r.mae:.4f}, max error={r.max_abs_err:.4f}, clothing-temperature seam gap={r.continuity_gap:.2e}")

print("\nregion  k_a     k_r     k_0     (PMV = k_a t_a + k_r t_r + k_0)")
for s in range(4):
    ka, kr, k0 = model.pmv_coefficients(s)
    print(f"  {s}    {ka:.4f}  {kr:.4f}  {k0:8.4f}")

print("\n t_a   t_r   exact    surrogate  region")
for ta, tr in [(23, 23), (25, 27), (26, 26), (27, 25), (29, 29), (31, 31)]:
    e = pmv_pwa(model, ta, tr)
    flag = " (outside fit domain)" if e.extrapolated else ""
    print(f"{ta:4.0f}  {tr:4.0f}  {pmv_exact(ta, tr, summer):+.4f}  {e.pmv:+.4f}    {e.region}{flag}")

# The surrogate's PMV coefficients were published for light summer clothing.
# For the heavier winter clothing they have to be recomputed.
winter = ComfortParams.winter()
print(f"\nwinter, fixed coefficients:   MAE={fit_pwa(winter).report.mae:.3f}")
print(f"winter, derived coefficients: MAE={fit_pwa(winter, affine='derived').report.mae:.4f}")

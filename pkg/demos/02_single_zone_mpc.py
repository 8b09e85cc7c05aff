"""One zone, one control step: build the horizon cost and solve it.

Run: python3 demos/02_single_zone_mpc.py
"""

import numpy as np

from pwadmpc.comfort import ComfortParams, fit_pwa
from pwadmpc.mpc import DaySchedule, MpcConfig, ZoneHorizon, build_subproblem, operating_points, solve
from pwadmpc.sim import WeatherSpec, internal_gain, synth_weather
from pwadmpc.thermal import ZoneThermalParams, build_continuous, condense, discretize, zone_state

dt, N = 900.0, 12
t0 = 11 * 3600.0  # 11:00, mid-morning, occupied
pwa = fit_pwa(ComfortParams.summer())
model = discretize(build_continuous(ZoneThermalParams.default()), dt)

# Corner zone: north and east walls outdoors, the others face 26 degC neighbours.
gain = internal_gain(16.0, 1 / 12, 100.0, 0.75, 0.4)
rows = synth_weather(WeatherSpec(), N, dt, gain_w=gain, t0=t0)
dist = np.zeros((N, 10))
dist[:, 0] = dist[:, 1] = rows[:, 0]
dist[:, 2] = dist[:, 3] = 26.0
dist[:, 4:6] = rows[:, 1:3]
dist[:, 8], dist[:, 9] = rows[:, 5], rows[:, 6]

x0 = zone_state(27.5, T_wi=28.0, T_wo=31.0)
zone = ZoneHorizon(condense(model, x0, dist), DaySchedule().horizon(t0, N, dt))
cfg = MpcConfig(N=N)

rep = solve("distributed-pwa", [zone], pwa, cfg)
u = rep.u_star[0]
ta, tr = operating_points(zone.prediction, u)
sub = build_subproblem(zone, pwa, u, cfg)
print(f"cooling plan (W): {np.round(u).astype(int).tolist()}")
print(f"predicted air temperature: {np.round(ta, 2).tolist()}")
print(f"surrogate PMV:             {np.round(sub.pmv(u), 3).tolist()}")
print(f"regions: {sub.active_regions.tolist()}  restarts={rep.restarts}  "
      f"interior margin={rep.interior_margins[0]:.3g}")

free_ta, _ = operating_points(zone.prediction, np.zeros(N))
print(f"\nwithout cooling the zone would reach {free_ta.max():.2f} degC within three hours")

"""Closed-loop receding-horizon simulation of a multi-zone building.

The plant couples every zone's RC network through shared interior walls and
is discretized once.  At each control step the controllers see their own
state, predict with the single-zone model (neighbour air temperatures held
at their current values), solve with the chosen strategy, and apply the
first input.
"""

from __future__ import annotations

import copy
import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .admm import AdmmConfig
from .comfort import ComfortParams, PwaComfortModel, fit_pwa, pmv_exact
from .mpc import (
    STRATEGIES,
    DaySchedule,
    MpcConfig,
    SolveReport,
    ZoneHorizon,
    p2_objective,
    solve,
)
from .thermal import (
    IDX_TZ,
    N_DIST,
    N_STATES,
    ORIENTATIONS,
    ZoneThermalParams,
    build_continuous,
    condense,
    discretize,
    expm,
    mean_radiant,
    read_disturbance_csv,
)

AMBIENT = -1
OPPOSITE = {"n": "s", "s": "n", "e": "w", "w": "e"}


class ScenarioError(ValueError):
    """Invalid scenario configuration or missing input data."""


# --------------------------------------------------------------------------
# topology


@dataclass(frozen=True)
class BuildingTopology:
    """Zones on identical floors laid out as a ``rows x cols`` grid per floor.

    ``adjacency[i]`` maps an orientation to the neighbouring zone id across
    that wall; ``AMBIENT`` marks an exterior wall.  Floors are thermally
    separate (floor and ceiling are not modelled).
    """

    floors: int
    zones_per_floor: int
    adjacency: tuple

    @classmethod
    def grid(cls, floors: int = 9, zones_per_floor: int = 4) -> "BuildingTopology":
        if floors < 1 or zones_per_floor < 1:
            raise ValueError("need at least one floor and one zone per floor")
        rows = 2 if zones_per_floor % 2 == 0 and zones_per_floor >= 4 else 1
        cols = zones_per_floor // rows
        adj = []
        for f in range(floors):
            for j in range(zones_per_floor):
                r, c = divmod(j, cols)
                base = f * zones_per_floor
                nb = {
                    "n": base + (r - 1) * cols + c if r > 0 else AMBIENT,
                    "s": base + (r + 1) * cols + c if r < rows - 1 else AMBIENT,
                    "w": base + r * cols + c - 1 if c > 0 else AMBIENT,
                    "e": base + r * cols + c + 1 if c < cols - 1 else AMBIENT,
                }
                adj.append(tuple(nb[o] for o in ORIENTATIONS))
        return cls(floors=floors, zones_per_floor=zones_per_floor, adjacency=tuple(adj))

    def __post_init__(self):
        if len(self.adjacency) != self.M:
            raise ValueError("adjacency must list every zone")
        for i, nbs in enumerate(self.adjacency):
            for o, j in zip(ORIENTATIONS, nbs):
                if j == AMBIENT:
                    continue
                if self.neighbor(j, OPPOSITE[o]) != i:
                    raise ValueError(f"adjacency not symmetric between zones {i} and {j}")

    @property
    def M(self) -> int:
        return self.floors * self.zones_per_floor

    def neighbor(self, i: int, orientation: str) -> int:
        return self.adjacency[i][ORIENTATIONS.index(orientation)]

    def exterior(self, i: int) -> np.ndarray:
        """0/1 mask over (n, e, w, s) of walls that face outdoors."""
        return np.array([float(j == AMBIENT) for j in self.adjacency[i]])


# --------------------------------------------------------------------------
# weather


@dataclass(frozen=True)
class WeatherSpec:
    """Diurnal profile: sinusoidal outdoor temperature, half-sine solar loads (W)."""

    T_mean: float = 28.5
    T_amp: float = 4.5
    T_peak_hour: float = 15.0
    solar_peak: Mapping[str, float] = field(default_factory=lambda: {"n": 150.0, "e": 800.0, "w": 800.0, "s": 500.0})
    solar_zone_peak: float = 300.0
    sunrise: float = 5.0
    sunset: float = 19.0
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.T_amp < 0 or self.noise_std < 0:
            raise ValueError("amplitudes must be non-negative")
        if not 0 <= self.sunrise < self.sunset <= 24:
            raise ValueError("need 0 <= sunrise < sunset <= 24")
        bad = set(self.solar_peak) - set(ORIENTATIONS)
        if bad:
            raise ValueError(f"unknown orientation(s) {sorted(bad)}")


def _half_sine(h: np.ndarray, start: float, end: float) -> np.ndarray:
    x = (h - start) / (end - start)
    return np.where((x > 0) & (x < 1), np.sin(np.pi * np.clip(x, 0, 1)), 0.0)


def solar_window(orientation: str, spec: WeatherSpec) -> tuple[float, float]:
    """Hours during which a wall of the given orientation is lit."""
    noon = 0.5 * (spec.sunrise + spec.sunset)
    return {
        "e": (spec.sunrise, noon + 1.0),
        "w": (noon - 1.0, spec.sunset),
        "s": (spec.sunrise + 2.0, spec.sunset - 2.0),
        "n": (spec.sunrise, spec.sunset),
    }[orientation]


def internal_gain(area: float, occupants_per_m2: float, per_occupant_w: float,
                  lighting_w_m2: float, equipment_w_m2: float) -> float:
    """Sensible internal load of an occupied zone (W)."""
    return area * occupants_per_m2 * per_occupant_w + area * (lighting_w_m2 + equipment_w_m2)


def synth_weather(spec: WeatherSpec, steps: int, dt: float = 900.0, *, schedule: DaySchedule | None = None,
                  gain_w: float = 0.0, t0: float = 0.0) -> np.ndarray:
    """Rows of ``T_out, Q_solar_wall_{n,e,w,s}, Q_internal, Q_solar_zone``.

    Row ``k`` holds the values for the interval starting at ``t0 + k dt``.
    Internal gains follow the schedule's occupied window.
    """
    schedule = schedule or DaySchedule()
    t = t0 + dt * np.arange(steps)
    h = (t / 3600.0) % 24.0
    T = spec.T_mean + spec.T_amp * np.cos(2 * np.pi * (h - spec.T_peak_hour) / 24.0)
    if spec.noise_std > 0:
        rng = np.random.default_rng(spec.seed)
        e = rng.normal(0.0, spec.noise_std, steps + 3)
        T = T + np.convolve(e, np.full(4, 0.5), mode="valid")[:steps]  # smoothed, same variance
    out = np.zeros((steps, 7))
    out[:, 0] = T
    for k, o in enumerate(ORIENTATIONS):
        out[:, 1 + k] = spec.solar_peak.get(o, 0.0) * _half_sine(h, *solar_window(o, spec))
    occ = np.array([schedule.occupied_at(tk) for tk in t], dtype=float)
    out[:, 5] = gain_w * occ
    out[:, 6] = spec.solar_zone_peak * _half_sine(h, spec.sunrise, spec.sunset)
    return out


# --------------------------------------------------------------------------
# scenario


DEFAULT_SCENARIO = {
    "name": "summer-36",
    "season": "summer",
    "topology": {"floors": 9, "zones_per_floor": 4},
    "duration_steps": 96,
    "zone": ZoneThermalParams.default().as_dict(),
    "comfort": {},
    "gains": {
        "area_m2": 16.0,
        "occupants_per_m2": 1.0 / 12.0,
        "per_occupant_w": 100.0,
        "lighting_w_m2": 0.75,
        "equipment_w_m2": 0.4,
    },
    "schedule": {"tariff_bands": [list(b) for b in DaySchedule().tariff_bands], "occupied_hours": [10.0, 20.0]},
    "weather": {
        "source": "synthetic",
        "path": None,
        "T_mean": 28.5,
        "T_amp": 4.5,
        "T_peak_hour": 15.0,
        "solar_peak": {"n": 150.0, "e": 800.0, "w": 800.0, "s": 500.0},
        "solar_zone_peak": 300.0,
        "sunrise": 5.0,
        "sunset": 19.0,
        "noise_std": 0.3,
        "seed": 0,
    },
    "mpc": {"N": 12, "alpha": 3.0e6, "u_min": 0.0, "u_max": 2000.0, "c_max": None, "dt": 900.0},
    "admm": {"rho": 0.1, "max_iter": 80, "T_d": 30, "tol": 1e-3, "z_from": "current", "restart_cap": 3},
    "pwa": {"path": None, "domain": [[22.0, 30.0], [22.0, 30.0]], "split": None, "affine": "fixed"},
    "plant": {"mismatch": 0.0, "seed": 0},
    "initial": {"T": 28.0, "warmup_days": 1},
}


def _merge(base: dict, over: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict) and k not in ("solar_peak",):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class Scenario:
    name: str
    topology: BuildingTopology
    zone_params: ZoneThermalParams
    comfort: ComfortParams
    schedule: DaySchedule
    mpc: MpcConfig
    admm: AdmmConfig
    duration: int
    gain_w: float
    weather_spec: WeatherSpec | None
    weather_path: Path | None
    pwa_path: Path | None
    pwa_domain: tuple
    pwa_split: tuple | None
    pwa_affine: str
    plant_mismatch: float
    plant_seed: int
    initial_T: float
    warmup_days: int
    season: str
    raw: dict

    @classmethod
    def default(cls, **overrides) -> "Scenario":
        return cls.from_dict(overrides)

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)

    @classmethod
    def from_dict(cls, data: Mapping, base_dir: str | Path = ".") -> "Scenario":
        unknown = set(data) - set(DEFAULT_SCENARIO)
        if unknown:
            raise ScenarioError(f"unknown scenario key(s): {sorted(unknown)}")
        d = _merge(DEFAULT_SCENARIO, data)
        base_dir = Path(base_dir)
        try:
            season = d["season"]
            if season not in ("summer", "winter"):
                raise ValueError("season must be 'summer' or 'winter'")
            comfort = getattr(ComfortParams, season)(**d["comfort"])
            topo = BuildingTopology.grid(int(d["topology"]["floors"]), int(d["topology"]["zones_per_floor"]))
            zp = ZoneThermalParams(**d["zone"])
            sched = DaySchedule(
                tariff_bands=tuple(tuple(b) for b in d["schedule"]["tariff_bands"]),
                occupied=tuple(d["schedule"]["occupied_hours"]),
            )
            m = d["mpc"]
            mpc = MpcConfig(
                N=int(m["N"]), alpha=float(m["alpha"]), u_min=float(m["u_min"]), u_max=float(m["u_max"]),
                c_max=None if m["c_max"] is None else np.asarray(m["c_max"], dtype=float), dt=float(m["dt"]),
            )
            a = d["admm"]
            admm = AdmmConfig(rho=float(a["rho"]), max_iter=int(a["max_iter"]), T_d=int(a["T_d"]),
                              tol=float(a["tol"]), z_from=a["z_from"], restart_cap=int(a["restart_cap"]))
            g = d["gains"]
            gain = internal_gain(g["area_m2"], g["occupants_per_m2"], g["per_occupant_w"],
                                 g["lighting_w_m2"], g["equipment_w_m2"])
            w = d["weather"]
            spec, wpath = None, None
            if w["source"] == "synthetic":
                spec = WeatherSpec(**{k: v for k, v in w.items() if k not in ("source", "path")})
            elif w["source"] == "csv":
                if not w.get("path"):
                    raise ValueError("csv weather needs a path")
                wpath = (base_dir / w["path"]).resolve()
                if not wpath.is_file():
                    raise ValueError(f"weather file {wpath} not found")
            else:
                raise ValueError("weather source must be 'synthetic' or 'csv'")
            p = d["pwa"]
            ppath = None
            if p["path"]:
                ppath = (base_dir / p["path"]).resolve()
                if not ppath.is_file():
                    raise ValueError(f"PWA model file {ppath} not found")
            duration = int(d["duration_steps"])
            if duration < mpc.N:
                raise ValueError("duration must be at least the horizon length")
            mismatch = float(d["plant"]["mismatch"])
            if not 0 <= mismatch < 1:
                raise ValueError("plant mismatch must lie in [0, 1)")
        except (TypeError, KeyError, ValueError) as exc:
            raise ScenarioError(str(exc)) from exc
        return cls(
            name=str(d["name"]), topology=topo, zone_params=zp, comfort=comfort, schedule=sched, mpc=mpc,
            admm=admm, duration=duration, gain_w=float(gain), weather_spec=spec, weather_path=wpath,
            pwa_path=ppath, pwa_domain=tuple(tuple(map(float, ax)) for ax in p["domain"]),
            pwa_split=None if p["split"] is None else tuple(map(float, p["split"])), pwa_affine=p["affine"],
            plant_mismatch=mismatch, plant_seed=int(d["plant"]["seed"]), initial_T=float(d["initial"]["T"]),
            warmup_days=int(d["initial"]["warmup_days"]), season=season, raw=d,
        )

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.raw, indent=2, sort_keys=True) + "\n")

    @property
    def M(self) -> int:
        return self.topology.M

    def weather(self, steps: int) -> np.ndarray:
        """Weather rows for ``steps`` consecutive control intervals from 00:00."""
        if self.weather_spec is not None:
            return synth_weather(self.weather_spec, steps, self.mpc.dt, schedule=self.schedule, gain_w=self.gain_w)
        _, data = read_disturbance_csv(self.weather_path)
        if data.shape[0] < steps:
            raise ScenarioError(f"weather file has {data.shape[0]} rows, need {steps}")
        return data[:steps]

    def comfort_model(self) -> PwaComfortModel:
        if self.pwa_path is not None:
            return PwaComfortModel.load(self.pwa_path)
        return _fitted(self.comfort, self.pwa_domain, self.pwa_split, self.pwa_affine)


@lru_cache(maxsize=8)
def _fitted(params, domain, split, affine) -> PwaComfortModel:
    return fit_pwa(params, domain, split, affine=affine)


# --------------------------------------------------------------------------
# plant


@dataclass(frozen=True)
class BuildingPlant:
    """Coupled discrete model ``X+ = Ad X + Gd (b u + E w)`` of all zones.

    ``X`` stacks the zone states; ``w`` stacks each zone's 10-vector with
    neighbour boundary temperatures ignored (they come from the states).
    """

    Ad: np.ndarray
    Gd: np.ndarray  # integral of exp(A s) over one step
    b: np.ndarray  # (9M, M), signed
    E: np.ndarray  # (9M, 10M)
    topology: BuildingTopology
    params: tuple

    def step(self, X: np.ndarray, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        """``X`` (M, 9), ``u`` (M,), ``w`` (M, 10) -> next ``X``."""
        drive = self.b @ np.asarray(u, dtype=float) + self.E @ np.asarray(w, dtype=float).ravel()
        return (self.Ad @ X.ravel() + self.Gd @ drive).reshape(X.shape)


def zone_parameters(scenario: Scenario) -> tuple:
    """Plant parameters per zone, perturbed when ``plant_mismatch`` is set."""
    M, m = scenario.M, scenario.plant_mismatch
    if m == 0:
        return (scenario.zone_params,) * M
    rng = np.random.default_rng(scenario.plant_seed)
    f = rng.uniform(1 - m, 1 + m, size=(M, 2))
    return tuple(scenario.zone_params.scaled(c, r) for c, r in f)


def build_plant(topology: BuildingTopology, params: Sequence[ZoneThermalParams], dt: float,
                input_sign: float = -1.0) -> BuildingPlant:
    M = topology.M
    n = N_STATES * M
    A = np.zeros((n, n))
    B = np.zeros((n, M))
    E = np.zeros((n, N_DIST * M))
    for i, p in enumerate(params):
        c = build_continuous(p)
        rs = slice(i * N_STATES, (i + 1) * N_STATES)
        A[rs, rs] = c.A
        B[rs, i] = c.B[:, 0] * input_sign
        Ei = c.E.copy()
        for k, j in enumerate(topology.adjacency[i]):
            if j != AMBIENT:
                A[rs, j * N_STATES + IDX_TZ] += Ei[:, k]
                Ei[:, k] = 0.0
        E[rs, i * N_DIST:(i + 1) * N_DIST] = Ei
    Ad = expm(A * dt)
    Gd = np.linalg.solve(A, Ad - np.eye(n))
    return BuildingPlant(Ad=Ad, Gd=Gd, b=B, E=E, topology=topology, params=tuple(params))


def zone_disturbances(topology: BuildingTopology, i: int, weather_rows: np.ndarray,
                      T_neighbors: np.ndarray | None = None) -> np.ndarray:
    """10-vectors for zone ``i`` over the given weather rows.

    Exterior walls see ``T_out`` and wall solar; interior walls see the
    neighbour's air temperature (``T_neighbors`` per zone, held fixed) and no
    solar.  Without ``T_neighbors`` interior boundary entries are zero, the
    form the plant expects.
    """
    rows = np.atleast_2d(weather_rows)
    ext = topology.exterior(i)
    out = np.zeros((rows.shape[0], N_DIST))
    for k, j in enumerate(topology.adjacency[i]):
        if j == AMBIENT:
            out[:, k] = rows[:, 0]
        elif T_neighbors is not None:
            out[:, k] = T_neighbors[j]
    out[:, 4:8] = rows[:, 1:5] * ext
    out[:, 8] = rows[:, 5]
    out[:, 9] = rows[:, 6]
    return out


# --------------------------------------------------------------------------
# traces


TRACE_COLUMNS = (
    "step", "time_h", "zone",
    "T_z", "T_wi_n", "T_wi_e", "T_wi_w", "T_wi_s", "T_wo_n", "T_wo_e", "T_wo_w", "T_wo_s",
    "u", "pmv_exact", "pmv_pwa", "region", "plan_region", "local_cost",
    "occupied", "tariff", "sum_u", "cost_increment", "iterations", "restarts", "degraded",
)
INT_COLUMNS = {"step", "zone", "region", "plan_region", "occupied", "iterations", "restarts", "degraded"}
TIMING_COLUMNS = ("step", "wall_time", "max_sequential_time")


@dataclass
class SimulationTrace:
    strategy: str
    columns: dict  # name -> 1-D array, one entry per zone-step
    timing: dict  # name -> 1-D array, one entry per step
    meta: dict = field(default_factory=dict)

    @property
    def rows(self) -> int:
        return len(self.columns["step"])

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(TRACE_COLUMNS)
            cols = [self.columns[c] for c in TRACE_COLUMNS]
            for r in range(self.rows):
                wr.writerow([_fmt(c, col[r]) for c, col in zip(TRACE_COLUMNS, cols)])

    def write_timing_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(TIMING_COLUMNS)
            for r in range(len(self.timing["step"])):
                wr.writerow([_fmt(c, self.timing[c][r]) for c in TIMING_COLUMNS])

    def write_plot_csv(self, path: str | Path) -> None:
        """Long format ``time_h, zone, T_z, pmv, u`` for heatmaps and box plots."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["time_h", "zone", "T_z", "pmv", "u"])
            c = self.columns
            for r in range(self.rows):
                wr.writerow([repr(float(c["time_h"][r])), int(c["zone"][r]), repr(float(c["T_z"][r])),
                             repr(float(c["pmv_exact"][r])), repr(float(c["u"][r]))])

    @classmethod
    def read_csv(cls, path: str | Path, timing_path: str | Path | None = None, strategy: str = "") -> "SimulationTrace":
        cols = _read_columns(path, TRACE_COLUMNS)
        timing = _read_columns(timing_path, TIMING_COLUMNS) if timing_path else {
            "step": np.arange(0), "wall_time": np.zeros(0), "max_sequential_time": np.zeros(0)}
        return cls(strategy=strategy, columns=cols, timing=timing)


def _fmt(name, v):
    return int(v) if name in INT_COLUMNS else repr(float(v))


def _read_columns(path, names) -> dict:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in names if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing column(s) {missing}")
        rows = list(reader)
    return {c: np.array([int(r[c]) if c in INT_COLUMNS else float(r[c]) for r in rows]) for c in names}


@dataclass(frozen=True)
class MetricsReport:
    strategy: str
    zones: int
    steps: int
    avg_power_w: float
    total_cost_cny: float
    pmv_min: float
    pmv_q1: float
    pmv_median: float
    pmv_q3: float
    pmv_max: float
    max_budget_excess_w: float
    wall_time_s: float
    max_sequential_s: float
    degraded_steps: int
    restarts: int

    @classmethod
    def from_trace(cls, trace: SimulationTrace, c_max: float | None = None) -> "MetricsReport":
        c = trace.columns
        steps = int(c["step"].max()) + 1 if trace.rows else 0
        zones = int(c["zone"].max()) + 1 if trace.rows else 0
        occ = c["occupied"] == 1
        pmv = c["pmv_exact"][occ]
        q = np.percentile(pmv, [0, 25, 50, 75, 100]) if pmv.size else np.full(5, np.nan)
        first = c["zone"] == 0
        excess = 0.0
        if c_max is not None:
            excess = max(float(np.max(c["sum_u"][first] - c_max, initial=0.0)), 0.0)
        return cls(
            strategy=trace.strategy,
            zones=zones,
            steps=steps,
            avg_power_w=float(c["u"].mean()) if trace.rows else 0.0,
            total_cost_cny=float(c["cost_increment"][first].sum()),
            pmv_min=float(q[0]), pmv_q1=float(q[1]), pmv_median=float(q[2]), pmv_q3=float(q[3]), pmv_max=float(q[4]),
            max_budget_excess_w=excess,
            wall_time_s=float(trace.timing["wall_time"].sum()),
            max_sequential_s=float(trace.timing["max_sequential_time"].sum()),
            degraded_steps=int(c["degraded"][first].sum()),
            restarts=int(c["restarts"][first].sum()),
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def write_json(self, path: str | Path, extra: Mapping | None = None) -> None:
        data = {**self.to_dict(), **(extra or {})}
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# closed loop


def initial_states(scenario: Scenario, plant: BuildingPlant, weather: np.ndarray) -> np.ndarray:
    """Uniform start at ``initial.T`` followed by free-floating warm-up days."""
    M = scenario.M
    X = np.full((M, N_STATES), scenario.initial_T)
    per_day = int(round(86400.0 / scenario.mpc.dt))
    n = scenario.warmup_days * per_day
    if n:
        rows = scenario.weather(per_day) if weather.shape[0] < per_day else weather[:per_day]
        W = [np.array([zone_disturbances(scenario.topology, i, rows[k])[0] for i in range(M)]) for k in range(per_day)]
        for k in range(n):
            X = plant.step(X, np.zeros(M), W[k % per_day])
    return X


def shift_warm_start(u_star: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """``[u(2..N), u(N)]`` clamped to the input bounds."""
    return np.clip(np.concatenate([u_star[:, 1:], u_star[:, -1:]], axis=1), lo, hi)


def enforce_budget(u: np.ndarray, c_max: float, lo: float) -> np.ndarray:
    """Scale the applied inputs toward ``lo`` if their sum exceeds the budget."""
    total = u.sum()
    if total <= c_max:
        return u
    floor = lo * u.size
    return lo + (c_max - floor) / (total - floor) * (u - lo)


def run_closed_loop(
    scenario: Scenario,
    strategy: str,
    *,
    jobs: int = 1,
    pwa: PwaComfortModel | None = None,
    progress=None,
) -> tuple[SimulationTrace, MetricsReport]:
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")
    pwa = pwa or scenario.comfort_model()
    cfg, topo, dt, N, M = scenario.mpc, scenario.topology, scenario.mpc.dt, scenario.mpc.N, scenario.M
    c_max = cfg.budget(M)
    plant = build_plant(topo, zone_parameters(scenario), dt)
    model = discretize(build_continuous(scenario.zone_params), dt)
    weather = scenario.weather(scenario.duration + N)
    X = initial_states(scenario, plant, weather)
    plant_w = np.array([[zone_disturbances(topo, i, weather[k])[0] for i in range(M)] for k in range(scenario.duration)])

    cols = {c: [] for c in TRACE_COLUMNS}
    timing = {c: [] for c in TIMING_COLUMNS}
    warm = None
    pool = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
    map_fn = pool.map if pool else map
    try:
        for k in range(scenario.duration):
            t = k * dt
            sched = scenario.schedule.horizon(t, N, dt)
            T_now = X[:, IDX_TZ].copy()
            zones = [
                ZoneHorizon(condense(model, X[i], zone_disturbances(topo, i, weather[k:k + N], T_now)), sched)
                for i in range(M)
            ]
            report = solve(strategy, zones, pwa, cfg, scenario.admm, warm, map_fn=map_fn)
            u = enforce_budget(np.clip(report.u_star[:, 0], cfg.u_min, cfg.u_max), float(c_max[0]), cfg.u_min)
            _record(cols, k, t, X, u, report, zones, pwa, scenario, cfg)
            timing["step"].append(k)
            timing["wall_time"].append(report.total_wall_time)
            timing["max_sequential_time"].append(report.max_sequential_time)
            X = plant.step(X, u, plant_w[k])
            warm = shift_warm_start(report.u_star, cfg.u_min, cfg.u_max)
            if progress is not None:
                progress(k, report)
    finally:
        if pool:
            pool.shutdown()

    trace = SimulationTrace(
        strategy=strategy,
        columns={c: np.array(v) for c, v in cols.items()},
        timing={c: np.array(v) for c, v in timing.items()},
        meta={"scenario": scenario.name, "weather_seed": _weather_seed(scenario), "plant_seed": scenario.plant_seed},
    )
    return trace, MetricsReport.from_trace(trace, float(c_max[0]))


def _weather_seed(scenario: Scenario):
    return None if scenario.weather_spec is None else scenario.weather_spec.seed


def _record(cols, k, t, X, u, report: SolveReport, zones, pwa, scenario: Scenario, cfg: MpcConfig):
    tariff = scenario.schedule.tariff_at(t)
    occupied = int(scenario.schedule.occupied_at(t))
    sum_u = float(u.sum())
    cost = tariff * sum_u * cfg.dt / 3.6e6
    ta, tr = X[:, IDX_TZ], mean_radiant(X)
    for i in range(X.shape[0]):
        vals = dict(
            step=k, time_h=t / 3600.0, zone=i,
            u=u[i],
            pmv_exact=pmv_exact(ta[i], tr[i], scenario.comfort),
            pmv_pwa=float(pwa.pmv_hat(ta[i], tr[i])),
            region=int(pwa.region_of(ta[i], tr[i])),
            plan_region=-1 if report.regions is None else int(report.regions[i, 0]),
            local_cost=p2_objective(zones[i], pwa, report.u_star[i], cfg),
            occupied=occupied, tariff=tariff, sum_u=sum_u, cost_increment=cost,
            iterations=report.admm_iterations or report.rounds, restarts=report.restarts,
            degraded=int(report.degraded),
        )
        for name, v in zip(TRACE_COLUMNS[3:12], X[i]):
            vals[name] = v
        for c in TRACE_COLUMNS:
            cols[c].append(vals[c])


COMPARISON_COLUMNS = (
    "strategy", "avg_power_w", "total_cost_cny", "pmv_min", "pmv_q1", "pmv_median", "pmv_q3", "pmv_max",
    "degraded_steps", "wall_time_s", "max_sequential_s",
)


def compare_strategies(scenario: Scenario, strategies: Sequence[str], *, jobs: int = 1,
                       pwa: PwaComfortModel | None = None, out_dir: str | Path | None = None) -> list[dict]:
    """Run each strategy on the same scenario; one metrics row per strategy."""
    if len(strategies) < 2:
        raise ValueError("compare needs at least two strategies")
    for s in strategies:
        if s not in STRATEGIES:
            raise ValueError(f"unknown strategy {s!r}; choose from {', '.join(STRATEGIES)}")
    pwa = pwa or scenario.comfort_model()
    rows = []
    for idx, s in enumerate(strategies):
        trace, metrics = run_closed_loop(scenario, s, jobs=jobs, pwa=pwa)
        if out_dir is not None:
            write_run(out_dir, trace, metrics, prefix=f"{idx}-{s}")
        rows.append({c: getattr(metrics, c) for c in COMPARISON_COLUMNS})
    return rows


def write_comparison_csv(path: str | Path, rows: Sequence[Mapping]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(COMPARISON_COLUMNS)
        for r in rows:
            wr.writerow([r[c] if isinstance(r[c], (str, int)) else repr(float(r[c])) for c in COMPARISON_COLUMNS])


def write_run(out_dir: str | Path, trace: SimulationTrace, metrics: MetricsReport, prefix: str | None = None) -> dict:
    """Trace, timing, plot-data and metrics files for one run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prefix = prefix or trace.strategy
    paths = {
        "trace": out / f"{prefix}-trace.csv",
        "timing": out / f"{prefix}-timing.csv",
        "plot": out / f"{prefix}-plot.csv",
        "metrics": out / f"{prefix}-metrics.json",
    }
    trace.write_csv(paths["trace"])
    trace.write_timing_csv(paths["timing"])
    trace.write_plot_csv(paths["plot"])
    metrics.write_json(paths["metrics"], extra={"seeds": {k: v for k, v in trace.meta.items() if k.endswith("seed")}})
    return paths


def cost_from_trace(trace: SimulationTrace, dt: float) -> float:
    """Tariff-weighted energy cost recomputed from per-zone inputs."""
    c = trace.columns
    return float(np.sum(c["tariff"] * c["u"]) * dt / 3.6e6)

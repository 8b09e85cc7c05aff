"""Per-zone MPC cost assembly and the three solver strategies.

Each zone's horizon cost over inputs ``u`` (W, one per step) is::

    J(u) = alpha * sum_l delta_l * pmv_l(u)**2 + sum_l lambda_l * u_l**2

where ``pmv_l`` is the surrogate PMV of the predicted state after step
``l``.  With the surrogate region of every step held fixed, ``pmv`` is affine
in ``u`` and ``J`` is the quadratic ``u'Hu + g'u + const``.

Strategies
----------
distributed-pwa
    Convex ADMM: regions are re-detected from the current iterate during the
    first ``T_d`` iterations, then frozen; the result is checked for strict
    interiority and restarted from a pushed point if needed.
centralized-pwa
    Sequential convex programming on the stacked problem with explicit
    budget rows, re-detecting regions between solves.
centralized-linear
    One stacked QP that uses a single affine PMV model everywhere.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .admm import AdmmConfig, AdmmState, admm_iteration, budget_violation
from .comfort import PwaComfortModel
from .qp import BoxQp, Polyhedron, QpError, membership_margin, solve_qp
from .thermal import IDX_TZ, IDX_WI, N_STATES, HorizonPrediction

TARIFF_BANDS = (
    (0.0, 8.0, 0.3358),
    (8.0, 14.0, 0.6629),
    (14.0, 17.0, 1.0881),
    (17.0, 19.0, 0.6629),
    (19.0, 22.0, 1.0881),
    (22.0, 24.0, 0.6629),
)
OCCUPIED_HOURS = (10.0, 20.0)
LINEAR_POINT = (26.0, 26.0)
INTERIOR_EPS_REL = 1e-6
CENTRALIZED_ROUNDS = 20
STRATEGIES = ("distributed-pwa", "centralized-pwa", "centralized-linear")


class NumericalError(RuntimeError):
    """A solver strategy could not produce any usable iterate."""


@dataclass(frozen=True)
class MpcConfig:
    N: int = 12
    alpha: float = 3.0e6
    u_min: float = 0.0
    u_max: float = 2000.0
    c_max: float | np.ndarray | None = None  # None: 0.8 * M * u_max
    dt: float = 900.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon N must be at least 1")
        if not 0 <= self.u_min <= self.u_max:
            raise ValueError("need 0 <= u_min <= u_max")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def budget(self, M: int) -> np.ndarray:
        c = 0.8 * M * self.u_max if self.c_max is None else self.c_max
        c = np.broadcast_to(np.asarray(c, dtype=float), (self.N,)).copy()
        if np.any(c < 0):
            raise ValueError("c_max must be non-negative")
        return c


@dataclass(frozen=True)
class Schedules:
    """Per-step occupancy flags (for predicted states) and prices (for inputs)."""

    occupancy: np.ndarray
    tariff: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=float)
        tar = np.asarray(self.tariff, dtype=float)
        if occ.shape != tar.shape or occ.ndim != 1:
            raise ValueError("occupancy and tariff must be 1-D and equally long")
        if not np.all((occ == 0) | (occ == 1)):
            raise ValueError("occupancy flags must be 0 or 1")
        if np.any(tar <= 0):
            raise ValueError("tariff values must be positive")
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "tariff", tar)

    @property
    def N(self) -> int:
        return self.tariff.shape[0]


@dataclass(frozen=True)
class DaySchedule:
    """Daily tariff bands ``(start_h, end_h, price)`` and occupied window."""

    tariff_bands: tuple = TARIFF_BANDS
    occupied: tuple = OCCUPIED_HOURS

    def __post_init__(self):
        bands = tuple(tuple(float(v) for v in b) for b in self.tariff_bands)
        edges = [b[0] for b in bands] + [bands[-1][1]]
        if edges[0] != 0.0 or edges[-1] != 24.0 or any(b[0] >= b[1] for b in bands):
            raise ValueError("tariff bands must tile [0, 24) in order")
        if any(a[1] != b[0] for a, b in zip(bands, bands[1:])):
            raise ValueError("tariff bands must be contiguous")
        if any(b[2] <= 0 for b in bands):
            raise ValueError("tariff values must be positive")
        object.__setattr__(self, "tariff_bands", bands)
        object.__setattr__(self, "occupied", tuple(float(v) for v in self.occupied))

    @staticmethod
    def hour(t: float) -> float:
        return (t / 3600.0) % 24.0

    def tariff_at(self, t: float) -> float:
        h = self.hour(t)
        for start, end, price in self.tariff_bands:
            if start <= h < end:
                return price
        return self.tariff_bands[-1][2]

    def occupied_at(self, t: float) -> bool:
        h = self.hour(t)
        return self.occupied[0] <= h < self.occupied[1]

    def horizon(self, t0: float, N: int, dt: float) -> Schedules:
        """Prices for inputs applied at ``t0 + l dt``; occupancy of states at ``t0 + (l+1) dt``."""
        return Schedules(
            occupancy=np.array([float(self.occupied_at(t0 + (l + 1) * dt)) for l in range(N)]),
            tariff=np.array([self.tariff_at(t0 + l * dt) for l in range(N)]),
        )


@dataclass(frozen=True)
class ZoneHorizon:
    """What one zone's controller knows at a control step."""

    prediction: HorizonPrediction
    sched: Schedules


@dataclass(frozen=True)
class ZoneSubproblem:
    """Quadratic cost ``u'Hu + g'u + const`` for fixed per-step regions."""

    H: np.ndarray
    g: np.ndarray
    const: float
    lo: np.ndarray
    hi: np.ndarray
    active_regions: np.ndarray
    region_polyhedron: Polyhedron
    affine_pmv: tuple  # (P (N, N), q (N,)): pmv = P u + q
    extrapolated: np.ndarray
    push: np.ndarray  # per polyhedron row: depth to aim for inside the adjacent region
    interior_eps: float

    def objective(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(u @ self.H @ u + self.g @ u + self.const)

    def box_cost(self) -> BoxQp:
        """The same cost in the ``1/2 u'Hu + g'u`` convention (constant dropped)."""
        return BoxQp(H=2.0 * self.H, g=self.g, lo=self.lo, hi=self.hi)

    def pmv(self, u) -> np.ndarray:
        P, q = self.affine_pmv
        return P @ np.asarray(u, dtype=float) + q

    def margin(self, u) -> float:
        return membership_margin(self.region_polyhedron, u)

    def restart_point(self, u) -> np.ndarray:
        """Move ``u`` across its most violated row toward the adjacent region."""
        A, b = self.region_polyhedron.A, self.region_polyhedron.b
        u = np.asarray(u, dtype=float)
        if A.shape[0] == 0:
            return u.copy()
        k = int(np.argmin(b - A @ u))
        a = A[k]
        nrm = a @ a
        if nrm == 0:
            return u.copy()
        shift = (b[k] + self.push[k] - a @ u) / nrm
        return np.clip(u + shift * a, self.lo, self.hi)


def _row_weights(radiant=(0.25, 0.25, 0.25, 0.25)) -> tuple[np.ndarray, np.ndarray]:
    e_a = np.zeros(N_STATES)
    e_a[IDX_TZ] = 1.0
    e_r = np.zeros(N_STATES)
    e_r[IDX_WI] = radiant
    return e_a, e_r


E_TA, E_TR = _row_weights()


def operating_points(pred: HorizonPrediction, u) -> tuple[np.ndarray, np.ndarray]:
    """Predicted ``(t_a, t_r)`` after every horizon step."""
    X = pred.predict(u)
    return X @ E_TA, X @ E_TR


def detect_regions(pwa: PwaComfortModel, pred: HorizonPrediction, u) -> np.ndarray:
    ta, tr = operating_points(pred, u)
    return np.asarray(pwa.region_of(ta, tr), dtype=int)


def interior_eps(pwa: PwaComfortModel) -> float:
    diam = max(np.hypot(*(hi - lo for lo, hi in pwa.region_bounds(s))) for s in range(4))
    return INTERIOR_EPS_REL * float(diam)


def build_subproblem(
    zone: ZoneHorizon,
    pwa: PwaComfortModel,
    u_ref,
    cfg: MpcConfig,
    regions=None,
) -> ZoneSubproblem:
    """Cost data of one zone with regions detected from ``u_ref`` (or given)."""
    pred, sched = zone.prediction, zone.sched
    N = pred.N
    if N != cfg.N or sched.N != N:
        raise ValueError("horizon length mismatch between prediction, schedules and config")
    u_ref = np.asarray(u_ref, dtype=float)
    free = pred.free
    X = free + pred.Gamma @ u_ref
    ta, tr = X @ E_TA, X @ E_TR
    s = np.asarray(pwa.region_of(ta, tr), dtype=int) if regions is None else np.asarray(regions, dtype=int)
    extrap = ~np.asarray(pwa.in_domain(ta, tr))

    k = np.array([pwa.pmv_coefficients(int(si)) for si in s])  # (N, 3)
    rows = k[:, :1] * E_TA + k[:, 1:2] * E_TR  # (N, 9)
    P = np.einsum("lk,lkj->lj", rows, pred.Gamma)
    q = np.einsum("lk,lk->l", rows, free) + k[:, 2]

    w = cfg.alpha * sched.occupancy
    H = P.T @ (w[:, None] * P) + np.diag(sched.tariff)
    H = 0.5 * (H + H.T)
    g = 2.0 * P.T @ (w * q)
    const = float(w @ (q * q))

    poly, push = _region_rows(pwa, pred, s, sched.occupancy if cfg.alpha > 0 else np.zeros(N))
    return ZoneSubproblem(
        H=H,
        g=g,
        const=const,
        lo=np.full(N, cfg.u_min),
        hi=np.full(N, cfg.u_max),
        active_regions=s,
        region_polyhedron=poly,
        affine_pmv=(P, q),
        extrapolated=extrap,
        push=push,
        interior_eps=interior_eps(pwa),
    )


def _region_rows(pwa: PwaComfortModel, pred: HorizonPrediction, regions, occupied) -> tuple[Polyhedron, np.ndarray]:
    """Split-line half-spaces that keep each occupied step in its region."""
    (a0, a1), (r0, r1) = pwa.domain
    ta_s, tr_s = pwa.split
    free = pred.free
    A, b, push = [], [], []
    for l in np.flatnonzero(occupied):
        s = int(regions[l])
        for e, split, upper, lo_w, hi_w in (
            (E_TA, ta_s, s // 2 == 1, ta_s - a0, a1 - ta_s),
            (E_TR, tr_s, s % 2 == 1, tr_s - r0, r1 - tr_s),
        ):
            row = e @ pred.Gamma[l]
            val = e @ free[l]
            sign = -1.0 if upper else 1.0  # lower side: value <= split
            A.append(sign * row)
            b.append(sign * (split - val))
            push.append(0.5 * (lo_w if upper else hi_w))
    N = pred.N
    if not A:
        return Polyhedron.empty(N), np.zeros(0)
    return Polyhedron(np.array(A), np.array(b)), np.array(push)


def p2_objective(zone: ZoneHorizon, pwa: PwaComfortModel, u, cfg: MpcConfig) -> float:
    """Horizon cost with every step scored on the region that contains it."""
    return build_subproblem(zone, pwa, u, cfg).objective(u)


# --------------------------------------------------------------------------
# reports


@dataclass
class SolveReport:
    strategy: str
    u_star: np.ndarray  # (M, N)
    objective: float
    admm_iterations: int = 0
    restarts: int = 0
    region_switch_count: int = 0
    wall_time: dict = field(default_factory=dict)
    max_sequential_time: float = 0.0
    interior_margins: np.ndarray | None = None
    regions: np.ndarray | None = None
    degraded: bool = False
    rounds: int = 0
    extrapolated_steps: int = 0
    log: list = field(default_factory=list)

    @property
    def total_wall_time(self) -> float:
        return float(self.wall_time.get("total", sum(self.wall_time.values())))

    def to_record(self) -> dict:
        """Plain-data summary of one control step."""
        return {
            "strategy": self.strategy,
            "objective": float(self.objective),
            "admm_iterations": int(self.admm_iterations),
            "restarts": int(self.restarts),
            "region_switch_count": int(self.region_switch_count),
            "rounds": int(self.rounds),
            "degraded": bool(self.degraded),
            "extrapolated_steps": int(self.extrapolated_steps),
            "wall_time": {k: float(v) for k, v in self.wall_time.items()},
            "max_sequential_time": float(self.max_sequential_time),
            "interior_margins": None if self.interior_margins is None else [float(m) for m in self.interior_margins],
            "u_star": self.u_star.tolist(),
        }


def _initial_inputs(zones: Sequence[ZoneHorizon], cfg: MpcConfig, warm) -> np.ndarray:
    M = len(zones)
    if warm is None:
        return np.full((M, cfg.N), cfg.u_min)
    warm = np.asarray(warm, dtype=float)
    if warm.shape != (M, cfg.N):
        raise ValueError(f"warm start must have shape ({M}, {cfg.N})")
    return np.clip(warm, cfg.u_min, cfg.u_max)


def _timed(fn):
    def run(*args):
        t0 = time.perf_counter()
        out = fn(*args)
        return out, time.perf_counter() - t0

    return run


def total_objective(zones, pwa, u, cfg) -> float:
    return float(sum(p2_objective(z, pwa, ui, cfg) for z, ui in zip(zones, u)))


# --------------------------------------------------------------------------
# distributed convex ADMM


def solve_convex_admm(
    zones: Sequence[ZoneHorizon],
    pwa: PwaComfortModel,
    cfg: MpcConfig,
    admm: AdmmConfig = AdmmConfig(),
    warm=None,
    *,
    map_fn: Callable = map,
) -> SolveReport:
    """Convex ADMM with subregion exploration, interior check and restarts.

    Never raises on a non-interior result: after ``admm.restart_cap``
    restarts the best iterate found is returned with ``degraded=True``.
    """
    M = len(zones)
    c_max = cfg.budget(M) if admm.c_max is None else np.broadcast_to(admm.c_max, (cfg.N,))
    u0 = _initial_inputs(zones, cfg, warm)
    t_start = time.perf_counter()
    stages = {"build": 0.0, "local": 0.0, "coordinator": 0.0, "check": 0.0}
    seq = 0.0
    restarts = switches = iters = 0
    log = []
    best = None

    while True:
        state = AdmmState.initial(u0, c_max)
        subs = None
        for tau in range(admm.max_iter):
            changed = False
            if subs is None or tau < admm.T_d:
                t0 = time.perf_counter()
                built = list(map_fn(_timed(lambda i: build_subproblem(zones[i], pwa, state.u[i], cfg)), range(M)))
                stages["build"] += time.perf_counter() - t0
                seq += max(t for _, t in built)
                new = [b for b, _ in built]
                if subs is not None:
                    n = sum(int(np.count_nonzero(a.active_regions != b.active_regions)) for a, b in zip(subs, new))
                    switches += n
                    changed = n > 0
                subs = new
            costs = [s.box_cost() for s in subs]
            t0 = time.perf_counter()
            state, timing = admm_iteration(state, costs, admm.rho, c_max, z_from=admm.z_from, map_fn=map_fn)
            stages["local"] += time.perf_counter() - t0 - timing.coordinator
            stages["coordinator"] += timing.coordinator
            seq += timing.max_sequential
            iters += 1
            obj = sum(s.objective(u) for s, u in zip(subs, state.u))
            log.append((iters, state.r, obj, budget_violation(state.u.sum(axis=0), c_max)))
            if state.r < admm.tol and not changed:
                break

        t0 = time.perf_counter()
        margins = np.array([s.margin(u) for s, u in zip(subs, state.u)])
        eps = subs[0].interior_eps if subs else 0.0
        ok = bool(np.all(margins >= eps))
        obj = total_objective(zones, pwa, state.u, cfg)
        cand = (ok, obj, state.u.copy(), margins, np.array([s.active_regions for s in subs]),
                int(sum(s.extrapolated.sum() for s in subs)))
        if best is None or (cand[0], -cand[1]) > (best[0], -best[1]):
            best = cand
        dt = time.perf_counter() - t0
        stages["check"] += dt
        seq += dt
        if ok or restarts >= admm.restart_cap:
            break
        restarts += 1
        u0 = state.u.copy()
        for i in np.flatnonzero(margins < eps):
            u0[i] = subs[i].restart_point(state.u[i])

    ok, obj, u, margins, regions, n_extrap = best
    stages["total"] = time.perf_counter() - t_start
    return SolveReport(
        strategy="distributed-pwa",
        u_star=u,
        objective=obj,
        admm_iterations=iters,
        restarts=restarts,
        region_switch_count=switches,
        wall_time=stages,
        max_sequential_time=seq,
        interior_margins=margins,
        regions=regions,
        degraded=not ok,
        extrapolated_steps=n_extrap,
        log=log,
    )


# --------------------------------------------------------------------------
# centralized strategies


def _budget_feasible(u: np.ndarray, c_max: np.ndarray, lo: float) -> np.ndarray:
    """Shrink each step's inputs toward ``lo`` until the budget holds."""
    u = u.copy()
    total = u.sum(axis=0)
    floor = lo * u.shape[0]
    over = total > c_max
    if np.any(over & (floor > c_max)):
        raise ValueError("budget below the sum of lower input bounds")
    t = np.ones_like(total)
    t[over] = (c_max[over] - floor) / (total[over] - floor)
    return lo + t * (u - lo)


def stacked_qp(subs: Sequence[ZoneSubproblem], c_max: np.ndarray):
    """Block-diagonal QP over all zones plus the two-sided budget rows."""
    M, N = len(subs), subs[0].g.shape[0]
    H = np.zeros((M * N, M * N))
    for i, s in enumerate(subs):
        H[i * N:(i + 1) * N, i * N:(i + 1) * N] = 2.0 * s.H
    g = np.concatenate([s.g for s in subs])
    lo = np.concatenate([s.lo for s in subs])
    hi = np.concatenate([s.hi for s in subs])
    S = np.tile(np.eye(N), M)
    G = np.vstack([S, -S])
    h = np.concatenate([c_max, np.zeros(N)])
    return H, g, lo, hi, G, h


def _solve_stacked(subs, c_max, x0):
    H, g, lo, hi, G, h = stacked_qp(subs, c_max)
    try:
        return solve_qp(H, g, lo, hi, G, h, x0=x0).x
    except QpError as exc:
        if exc.x is None:
            raise NumericalError(str(exc)) from exc
        return exc.x


def solve_centralized_pwa(
    zones: Sequence[ZoneHorizon],
    pwa: PwaComfortModel,
    cfg: MpcConfig,
    warm=None,
    *,
    max_rounds: int = CENTRALIZED_ROUNDS,
) -> SolveReport:
    """Sequential convex loop on the stacked problem until regions settle."""
    M, N = len(zones), cfg.N
    c_max = cfg.budget(M)
    t_start = time.perf_counter()
    u = _budget_feasible(_initial_inputs(zones, cfg, warm), c_max, cfg.u_min)
    seen = set()
    best = None
    converged = False
    switches = 0
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        subs = [build_subproblem(z, pwa, ui, cfg) for z, ui in zip(zones, u)]
        key = np.array([s.active_regions for s in subs])
        seen.add(key.tobytes())
        u_new = _solve_stacked(subs, c_max, u.ravel()).reshape(M, N)
        new_key = np.array([detect_regions(pwa, z.prediction, ui) for z, ui in zip(zones, u_new)])
        obj = total_objective(zones, pwa, u_new, cfg)
        if best is None or obj < best[0]:
            best = (obj, u_new, new_key)
        if np.array_equal(new_key, key):
            converged = True
            best = (obj, u_new, new_key)
            break
        switches += int(np.count_nonzero(new_key != key))
        if new_key.tobytes() in seen:
            break  # cycle
        u = u_new
    obj, u, regions = best
    wall = time.perf_counter() - t_start
    return SolveReport(
        strategy="centralized-pwa",
        u_star=u,
        objective=obj,
        region_switch_count=switches,
        wall_time={"total": wall},
        max_sequential_time=wall,
        regions=regions,
        degraded=not converged,
        rounds=rounds,
    )


def solve_centralized_linear(
    zones: Sequence[ZoneHorizon],
    pwa: PwaComfortModel,
    cfg: MpcConfig,
    warm=None,
    *,
    point: tuple = LINEAR_POINT,
) -> SolveReport:
    """One stacked QP with the affine piece that contains ``point`` at every step."""
    M, N = len(zones), cfg.N
    c_max = cfg.budget(M)
    t_start = time.perf_counter()
    u0 = _budget_feasible(_initial_inputs(zones, cfg, warm), c_max, cfg.u_min)
    s0 = int(pwa.region_of(*point))
    subs = [build_subproblem(z, pwa, ui, cfg, regions=np.full(N, s0)) for z, ui in zip(zones, u0)]
    u = _solve_stacked(subs, c_max, u0.ravel()).reshape(M, N)
    wall = time.perf_counter() - t_start
    return SolveReport(
        strategy="centralized-linear",
        u_star=u,
        objective=total_objective(zones, pwa, u, cfg),
        wall_time={"total": wall},
        max_sequential_time=wall,
        regions=np.full((M, N), s0),
        rounds=1,
    )


def solve(
    strategy: str,
    zones: Sequence[ZoneHorizon],
    pwa: PwaComfortModel,
    cfg: MpcConfig,
    admm: AdmmConfig = AdmmConfig(),
    warm=None,
    *,
    map_fn: Callable = map,
) -> SolveReport:
    if strategy == "distributed-pwa":
        return solve_convex_admm(zones, pwa, cfg, admm, warm, map_fn=map_fn)
    if strategy == "centralized-pwa":
        return solve_centralized_pwa(zones, pwa, cfg, warm)
    if strategy == "centralized-linear":
        return solve_centralized_linear(zones, pwa, cfg, warm)
    raise ValueError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")

"""Jacobi-parallel ADMM for a shared budget ``0 <= sum_i u_i <= c_max``.

Scaled-dual form::

    u_i+ = argmin  f_i(u_i) + rho/2 ||u_i + sum_{j!=i} u_j - z + theta||^2
    z+   = clip(sum_i u_i + theta, 0, c_max)
    theta+ = theta + sum_i u_i+ - z+

Every local update reads only the previous iterate, so all zones can be
solved concurrently.  ``z_from`` picks which iterate of ``sum_i u_i`` the
projection uses: ``"current"`` (the freshly computed one, default) or
``"previous"`` (the one the local updates started from).
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .qp import BoxQp, QpError, solve_box_qp


class LocalSolveError(RuntimeError):
    def __init__(self, zone: int, cause: Exception):
        super().__init__(f"zone {zone}: {cause}")
        self.zone = zone
        self.cause = cause


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 0.1
    max_iter: int = 80
    T_d: int = 30
    tol: float = 1e-3
    c_max: float | np.ndarray | None = None
    z_from: str = "current"
    restart_cap: int = 3

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not 0 <= self.T_d <= self.max_iter:
            raise ValueError("need 0 <= T_d <= max_iter")
        if self.z_from not in ("current", "previous"):
            raise ValueError("z_from must be 'current' or 'previous'")
        if self.c_max is not None and np.any(np.asarray(self.c_max) < 0):
            raise ValueError("c_max must be non-negative")


@dataclass
class AdmmState:
    u: np.ndarray  # (M, N)
    z: np.ndarray
    theta: np.ndarray
    tau: int = 0
    r_history: list = field(default_factory=list)

    @classmethod
    def initial(cls, u0, c_max) -> "AdmmState":
        u0 = np.array(u0, dtype=float, copy=True)
        return cls(u=u0, z=z_update(u0.sum(axis=0), 0.0, c_max), theta=np.zeros(u0.shape[1]))

    @property
    def M(self) -> int:
        return self.u.shape[0]

    @property
    def r(self) -> float:
        return self.r_history[-1] if self.r_history else float("inf")


def z_update(sum_u, theta, c_max) -> np.ndarray:
    """Project ``sum_u + theta`` onto the budget box ``[0, c_max]``."""
    return np.clip(np.asarray(sum_u, dtype=float) + theta, 0.0, c_max)


def dual_update(theta, sum_u_new, z_new) -> np.ndarray:
    return theta + (sum_u_new - z_new)


def residual(u_new, u_old) -> float:
    """Mean over zones of the l1 change of each zone's input sequence."""
    u_new, u_old = np.atleast_2d(u_new), np.atleast_2d(u_old)
    return float(np.abs(u_new - u_old).sum(axis=1).mean())


def augmented_qp(cost: BoxQp, state: AdmmState, i: int, rho: float) -> BoxQp:
    """Zone ``i``'s local problem with the ADMM penalty folded in."""
    others = state.u.sum(axis=0) - state.u[i]
    v = others - state.z + state.theta
    n = cost.n
    return BoxQp(H=cost.H + rho * np.eye(n), g=cost.g + rho * v, lo=cost.lo, hi=cost.hi)


def local_update(i: int, cost: BoxQp, state: AdmmState, rho: float) -> np.ndarray:
    """New input sequence of zone ``i`` from the iterate-``tau`` snapshot."""
    try:
        return solve_box_qp(augmented_qp(cost, state, i, rho), warm=state.u[i]).x
    except QpError as exc:
        raise LocalSolveError(i, exc) from exc


@dataclass
class IterationTiming:
    local: np.ndarray  # seconds per zone
    coordinator: float

    @property
    def max_sequential(self) -> float:
        return float(self.local.max(initial=0.0)) + self.coordinator


def admm_iteration(
    state: AdmmState,
    costs: Sequence[BoxQp],
    rho: float,
    c_max,
    *,
    z_from: str = "current",
    map_fn: Callable = map,
) -> tuple[AdmmState, IterationTiming]:
    """One Jacobi sweep: all local updates, then the ``z`` and dual updates."""

    def work(i):
        t0 = time.perf_counter()
        u = local_update(i, costs[i], state, rho)
        return u, time.perf_counter() - t0

    out = list(map_fn(work, range(state.M)))
    t0 = time.perf_counter()
    u_new = np.array([u for u, _ in out])
    sum_old = state.u.sum(axis=0)
    sum_new = u_new.sum(axis=0)
    z_new = z_update(sum_new if z_from == "current" else sum_old, state.theta, c_max)
    theta_new = dual_update(state.theta, sum_new, z_new)
    r = residual(u_new, state.u)
    new = AdmmState(u=u_new, z=z_new, theta=theta_new, tau=state.tau + 1, r_history=state.r_history + [r])
    timing = IterationTiming(local=np.array([t for _, t in out]), coordinator=time.perf_counter() - t0)
    return new, timing


def budget_violation(sum_u, c_max) -> float:
    sum_u = np.asarray(sum_u, dtype=float)
    return float(np.max(np.maximum(sum_u - c_max, 0.0) + np.maximum(-sum_u, 0.0), initial=0.0))


@dataclass
class AdmmRun:
    state: AdmmState
    log: list  # (tau, r, objective, max_violation)
    max_sequential_time: float
    wall_time: float


def run_admm(
    costs: Sequence[BoxQp],
    u0,
    cfg: AdmmConfig,
    *,
    c_max=None,
    map_fn: Callable = map,
    constants: Iterable[float] | None = None,
) -> AdmmRun:
    """Iterate on fixed local costs until ``r < tol`` or ``max_iter``."""
    c_max = cfg.c_max if c_max is None else c_max
    if c_max is None:
        c_max = np.inf
    const = 0.0 if constants is None else float(sum(constants))
    state = AdmmState.initial(u0, c_max)
    log = []
    seq = 0.0
    t_start = time.perf_counter()
    for _ in range(cfg.max_iter):
        state, timing = admm_iteration(state, costs, cfg.rho, c_max, z_from=cfg.z_from, map_fn=map_fn)
        seq += timing.max_sequential
        obj = sum(c.objective(u) for c, u in zip(costs, state.u)) + const
        log.append((state.tau, state.r, obj, budget_violation(state.u.sum(axis=0), c_max)))
        if state.r < cfg.tol:
            break
    return AdmmRun(state=state, log=log, max_sequential_time=seq, wall_time=time.perf_counter() - t_start)


def write_iteration_log(path: str | Path, log: Sequence[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["tau", "r", "objective", "max_violation"])
        for tau, r, obj, viol in log:
            wr.writerow([tau, repr(float(r)), repr(float(obj)), repr(float(viol))])

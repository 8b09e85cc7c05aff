"""RC thermal model of a single zone.

Nine nodes per zone: the air node plus an inner and an outer surface node
for each of the four walls.  State ordering is fixed::

    [T_z, T_wi(n, e, w, s), T_wo(n, e, w, s)]

The continuous model is ``dx/dt = Ac x + Bc u + Ec w`` where ``w`` is the
10-vector of exogenous inputs (four boundary temperatures, four wall solar
loads, internal gains, solar gain into the zone).  Discretization is exact
zero-order hold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

ORIENTATIONS = ("n", "e", "w", "s")
N_STATES = 9
N_DIST = 10

IDX_TZ = 0
IDX_WI = slice(1, 5)
IDX_WO = slice(5, 9)


def _per_ori(value) -> np.ndarray:
    if isinstance(value, Mapping):
        return np.array([float(value[o]) for o in ORIENTATIONS])
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(4, float(arr))
    if arr.shape != (4,):
        raise ValueError("expected one value per orientation (n, e, w, s)")
    return arr.copy()


@dataclass(frozen=True)
class ZoneThermalParams:
    """Capacities (J/K) and resistances (K/W) of one zone.

    Per-orientation arrays are ordered (n, e, w, s).
    """

    C_z: float
    C_w: np.ndarray
    R_in: np.ndarray
    R_cond: np.ndarray
    R_out: np.ndarray

    def __post_init__(self):
        for name in ("C_w", "R_in", "R_cond", "R_out"):
            object.__setattr__(self, name, _per_ori(getattr(self, name)))
        values = np.concatenate([[self.C_z], self.C_w, self.R_in, self.R_cond, self.R_out])
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError("thermal capacities and resistances must be strictly positive")

    @classmethod
    def default(cls) -> "ZoneThermalParams":
        """Reference zone parameters (east/west walls share values, as do north/south)."""
        return cls(
            C_z=4.8e4,
            C_w={"n": 8.5e5, "e": 1.1e6, "w": 1.1e6, "s": 8.5e5},
            R_in={"n": 0.0310, "e": 0.0232, "w": 0.0232, "s": 0.0310},
            R_cond={"n": 0.0238, "e": 0.0179, "w": 0.0179, "s": 0.0238},
            R_out={"n": 0.0116, "e": 0.0087, "w": 0.0087, "s": 0.0116},
        )

    def scaled(self, c_scale: float = 1.0, r_scale: float = 1.0) -> "ZoneThermalParams":
        return ZoneThermalParams(
            C_z=self.C_z * c_scale,
            C_w=self.C_w * c_scale,
            R_in=self.R_in * r_scale,
            R_cond=self.R_cond * r_scale,
            R_out=self.R_out * r_scale,
        )

    def as_dict(self) -> dict:
        return {
            "C_z": float(self.C_z),
            **{k: dict(zip(ORIENTATIONS, map(float, getattr(self, k)))) for k in ("C_w", "R_in", "R_cond", "R_out")},
        }


@dataclass(frozen=True)
class DisturbanceSample:
    """Exogenous inputs to one zone over one step.

    ``T_neighbor`` maps an orientation to the air temperature of the zone on
    the other side of that wall; orientations absent from it face outdoors.
    """

    T_out_env: float
    Q_rad_wall: np.ndarray = field(default_factory=lambda: np.zeros(4))
    Q_internal: float = 0.0
    Q_rad_zone: float = 0.0
    T_neighbor: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "Q_rad_wall", _per_ori(self.Q_rad_wall))
        bad = set(self.T_neighbor) - set(ORIENTATIONS)
        if bad:
            raise ValueError(f"unknown orientation(s) {sorted(bad)}")

    def boundary_temperatures(self) -> np.ndarray:
        return np.array([self.T_neighbor.get(o, self.T_out_env) for o in ORIENTATIONS], dtype=float)

    def vector(self) -> np.ndarray:
        """The 10-vector ``w`` consumed by the disturbance map."""
        return np.concatenate(
            [self.boundary_temperatures(), self.Q_rad_wall, [self.Q_internal, self.Q_rad_zone]]
        )


def zone_state(T_z: float, T_wi=None, T_wo=None) -> np.ndarray:
    """Assemble a 9-vector state; wall temperatures default to ``T_z``."""
    T_wi = _per_ori(T_z if T_wi is None else T_wi)
    T_wo = _per_ori(T_z if T_wo is None else T_wo)
    return np.concatenate([[T_z], T_wi, T_wo])


def mean_radiant(x: np.ndarray, weights: Sequence[float] = (0.25, 0.25, 0.25, 0.25)) -> np.ndarray:
    """Mean radiant temperature from the inner wall surfaces of state(s) ``x``."""
    return np.asarray(x)[..., IDX_WI] @ np.asarray(weights, dtype=float)


@dataclass(frozen=True)
class ContinuousZoneModel:
    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    params: ZoneThermalParams

    def disturbance(self, dist: DisturbanceSample) -> np.ndarray:
        return self.E @ dist.vector()


@dataclass(frozen=True)
class DiscreteZoneModel:
    """ZOH model ``x+ = A x + B (input_sign u) + E w``; ``d = E w``."""

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    dt: float
    input_sign: float = -1.0
    params: ZoneThermalParams | None = None

    def d(self, dist: DisturbanceSample | np.ndarray) -> np.ndarray:
        w = dist.vector() if isinstance(dist, DisturbanceSample) else np.asarray(dist, dtype=float)
        return self.E @ w

    @property
    def b(self) -> np.ndarray:
        """Signed input column (effect of one unit of the decision variable)."""
        return self.B * self.input_sign


@dataclass(frozen=True)
class HorizonPrediction:
    """Stacked prediction ``X = Phi x0 + Gamma u + offset``.

    ``X`` is (N, 9): row ``l`` is the state after ``l + 1`` steps.
    """

    Phi: np.ndarray  # (N, 9, 9)
    Gamma: np.ndarray  # (N, 9, N)
    offset: np.ndarray  # (N, 9)
    x0: np.ndarray

    @property
    def N(self) -> int:
        return self.Gamma.shape[0]

    @property
    def free(self) -> np.ndarray:
        """Free response ``Phi x0 + offset``, shape (N, 9)."""
        return self.Phi @ self.x0 + self.offset

    def predict(self, u: np.ndarray) -> np.ndarray:
        return self.free + self.Gamma @ np.asarray(u, dtype=float)


def build_continuous(params: ZoneThermalParams) -> ContinuousZoneModel:
    """Assemble the nine heat-balance equations of one zone."""
    Cz, Cw = params.C_z, params.C_w
    Rin, Rc, Ro = params.R_in, params.R_cond, params.R_out
    A = np.zeros((N_STATES, N_STATES))
    E = np.zeros((N_STATES, N_DIST))
    B = np.zeros((N_STATES, 1))

    A[0, 0] = -np.sum(1.0 / Rin) / Cz
    A[0, 1:5] = 1.0 / (Cz * Rin)
    B[0, 0] = 1.0 / Cz
    E[0, 8] = E[0, 9] = 1.0 / Cz

    for k in range(4):
        wi, wo = 1 + k, 5 + k
        A[wi, 0] = 1.0 / (Cw[k] * Rin[k])
        A[wi, wi] = -(1.0 / Rin[k] + 1.0 / Rc[k]) / Cw[k]
        A[wi, wo] = 1.0 / (Cw[k] * Rc[k])

        A[wo, wi] = 1.0 / (Cw[k] * Rc[k])
        A[wo, wo] = -(1.0 / Ro[k] + 1.0 / Rc[k]) / Cw[k]
        E[wo, k] = 1.0 / (Cw[k] * Ro[k])
        E[wo, 4 + k] = 1.0 / Cw[k]
    return ContinuousZoneModel(A=A, B=B, E=E, params=params)


# Pade(13) coefficients for the scaling-and-squaring exponential.
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def expm(M: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring around a degree-13 Pade core."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("expm needs a square matrix")
    norm = np.linalg.norm(M, 1)
    s = 0 if norm <= _THETA13 else int(np.ceil(np.log2(norm / _THETA13)))
    X = M / 2.0**s
    b = _PADE13
    I = np.eye(n)
    X2 = X @ X
    X4 = X2 @ X2
    X6 = X4 @ X2
    U = X @ (X6 @ (b[13] * X6 + b[11] * X4 + b[9] * X2) + b[7] * X6 + b[5] * X4 + b[3] * X2 + b[1] * I)
    V = X6 @ (b[12] * X6 + b[10] * X4 + b[8] * X2) + b[6] * X6 + b[4] * X4 + b[2] * X2 + b[0] * I
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R


def zoh(A: np.ndarray, B: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact discretization of ``dx/dt = A x + B v`` with ``v`` held over ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    n, m = A.shape[0], B.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A
    aug[:n, n:] = B
    F = expm(aug * dt)
    return F[:n, :n], F[:n, n:]


def discretize(cont: ContinuousZoneModel, dt: float, input_sign: float = -1.0) -> DiscreteZoneModel:
    """ZOH discretization; inputs and disturbances are held constant over a step."""
    if input_sign not in (1.0, -1.0, 1, -1):
        raise ValueError("input_sign must be +1 (heating) or -1 (cooling)")
    A, BE = zoh(cont.A, np.hstack([cont.B, cont.E]), dt)
    return DiscreteZoneModel(
        A=A, B=BE[:, :1].copy(), E=BE[:, 1:].copy(), dt=float(dt),
        input_sign=float(input_sign), params=cont.params,
    )


def step(model: DiscreteZoneModel, x: np.ndarray, u: float, dist: DisturbanceSample | np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (N_STATES,):
        raise ValueError(f"state must have shape ({N_STATES},), got {x.shape}")
    return model.A @ x + model.b[:, 0] * float(u) + model.d(dist)


def condense(model: DiscreteZoneModel, x0: np.ndarray, dists: Sequence) -> HorizonPrediction:
    """Eliminate the states over the horizon given one disturbance per step."""
    N = len(dists)
    if N < 1:
        raise ValueError("need at least one disturbance sample")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (N_STATES,):
        raise ValueError(f"state must have shape ({N_STATES},), got {x0.shape}")
    A, b = model.A, model.b[:, 0]
    Phi = np.empty((N, N_STATES, N_STATES))
    Gamma = np.zeros((N, N_STATES, N))
    offset = np.empty((N, N_STATES))
    P = np.eye(N_STATES)
    off = np.zeros(N_STATES)
    for l in range(N):
        P = A @ P
        off = A @ off + model.d(dists[l])
        Phi[l] = P
        offset[l] = off
        if l:
            Gamma[l, :, :l] = A @ Gamma[l - 1, :, :l]
        Gamma[l, :, l] = b
    return HorizonPrediction(Phi=Phi, Gamma=Gamma, offset=offset, x0=x0.copy())


DISTURBANCE_COLUMNS = (
    "timestamp", "T_out",
    "Q_solar_wall_n", "Q_solar_wall_e", "Q_solar_wall_w", "Q_solar_wall_s",
    "Q_internal", "Q_solar_zone",
)


def read_disturbance_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read a weather/gains file, one row per control step.

    Returns the timestamps and an (n, 7) array of
    ``T_out, Q_solar_wall_{n,e,w,s}, Q_internal, Q_solar_zone``.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in DISTURBANCE_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing column(s) {missing}")
        stamps, rows = [], []
        for row in reader:
            stamps.append(row["timestamp"])
            rows.append([float(row[c]) for c in DISTURBANCE_COLUMNS[1:]])
    return stamps, np.array(rows, dtype=float).reshape(-1, 7)


def write_disturbance_csv(path: str | Path, stamps: Sequence[str], data: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(DISTURBANCE_COLUMNS)
        for s, row in zip(stamps, np.asarray(data)):
            wr.writerow([s, *(repr(float(v)) for v in row)])

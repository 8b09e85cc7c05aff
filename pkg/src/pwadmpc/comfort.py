"""Thermal comfort: exact PMV and its four-region piecewise-affine surrogate.

The exact index follows Fanger's heat balance with the implicit clothing
surface temperature ``t_cl``.  The surrogate replaces ``t_cl`` by a
piecewise-affine function of air and mean radiant temperature and the
vapour pressure by an affine function of air temperature, which makes
PMV affine in ``(t_a, t_r)`` on each region.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

CLO = 0.155  # m2K/W per clo

# Affine PMV surrogate in (p_a, t_a, t_cl) and the affine vapour pressure.
PMV_AFFINE = {"p_a": 0.2551, "t_a": 0.0052, "t_cl": 0.8052, "const": -25.2883}
PA_AFFINE = {"slope": 1.7833, "intercept": -12.7516, "scale": 1e-3}

TCL_DAMPING = 0.5
TCL_MAX_ITER = 200
TCL_TOL = 1e-10


class ComfortError(RuntimeError):
    """Numerical failure in the clothing temperature solve."""

    def __init__(self, msg, residual=float("nan")):
        super().__init__(msg)
        self.residual = residual


class PwaFitError(ValueError):
    pass


@dataclass(frozen=True)
class ComfortParams:
    """Occupant/environment constants: metabolic rate and work (W/m2),
    clothing resistance (m2K/W), relative air speed (m/s), relative humidity (0-1)."""

    M: float = 60.0
    W: float = 0.0
    I_cl: float = 0.5 * CLO
    v_ar: float = 0.1
    Phi: float = 0.5

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("metabolic rate must be positive")
        if self.W < 0 or self.I_cl < 0:
            raise ValueError("work and clothing resistance must be non-negative")
        if not self.v_ar > 0:
            raise ValueError("air speed must be positive")
        if not 0 <= self.Phi <= 1:
            raise ValueError("relative humidity is a fraction in [0, 1]")

    @classmethod
    def summer(cls, **kw) -> "ComfortParams":
        return cls(**{"I_cl": 0.5 * CLO, **kw})

    @classmethod
    def winter(cls, **kw) -> "ComfortParams":
        return cls(**{"I_cl": 1.0 * CLO, **kw})


def f_cl(params: ComfortParams) -> float:
    """Clothing area factor."""
    I = params.I_cl
    return 1.00 + 1.290 * I if I <= 0.078 else 1.05 + 0.645 * I


def vapor_pressure(t_a, Phi):
    """Water vapour partial pressure (Magnus form, same scaling as the surrogate)."""
    t_a = np.asarray(t_a, dtype=float)
    return Phi * 6.1094 * np.exp(17.625 * t_a / (t_a + 243.04)) * 1e-3


def _h_c(t_cl, t_a, v_ar):
    return max(2.38 * abs(t_cl - t_a) ** 0.25, 12.1 * np.sqrt(v_ar))


def _tcl_rhs(t, t_a, t_r, params, fcl):
    hc = _h_c(t, t_a, params.v_ar)
    rad = 3.96e-8 * fcl * ((t + 273.0) ** 4 - (t_r + 273.0) ** 4)
    return 35.7 - 0.0275 * (params.M - params.W) - params.I_cl * (rad + fcl * hc * (t - t_a))


def solve_tcl(t_a: float, t_r: float, params: ComfortParams) -> tuple[float, float]:
    """Clothing surface temperature and the convective coefficient at it.

    Damped fixed-point iteration on ``t = RHS(t)``; ``h_c`` is re-evaluated
    every sweep.  Falls back to bisection on ``t - RHS(t)``, which is
    strictly increasing in ``t``.
    """
    fcl = f_cl(params)
    base = 35.7 - 0.0275 * (params.M - params.W)
    if params.I_cl == 0:
        return base, _h_c(base, t_a, params.v_ar)

    t = 0.5 * (t_a + base)
    for _ in range(TCL_MAX_ITER):
        t_new = (1 - TCL_DAMPING) * t + TCL_DAMPING * _tcl_rhs(t, t_a, t_r, params, fcl)
        if abs(t_new - t) < TCL_TOL:
            t = t_new
            break
        t = t_new
    res = t - _tcl_rhs(t, t_a, t_r, params, fcl)
    if abs(res) < 1e-9:
        return t, _h_c(t, t_a, params.v_ar)

    # bisection fallback
    def F(s):
        return s - _tcl_rhs(s, t_a, t_r, params, fcl)

    lo, hi = min(t_a, t_r, base) - 50.0, max(t_a, t_r, base) + 50.0
    if F(lo) > 0 or F(hi) < 0:
        raise ComfortError("clothing temperature not bracketed", residual=res)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if F(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-13:
            break
    t = 0.5 * (lo + hi)
    res = F(t)
    if abs(res) >= 1e-8:
        raise ComfortError(f"clothing temperature did not converge (residual {res:.3e})", residual=res)
    return t, _h_c(t, t_a, params.v_ar)


def pmv_exact(t_a: float, t_r: float, params: ComfortParams) -> float:
    """Predicted mean vote at air temperature ``t_a`` and mean radiant ``t_r``."""
    M, W = params.M, params.W
    mw = M - W
    fcl = f_cl(params)
    t_cl, hc = solve_tcl(t_a, t_r, params)
    p_a = float(vapor_pressure(t_a, params.Phi))
    L = (
        mw
        - 3.05 * (5.733 - 0.007 * mw - p_a)
        - 0.42 * (mw - 58.15)
        - 0.0173 * M * (5.867 - p_a)
        - 0.0014 * M * (34.0 - t_a)
        - 3.96e-8 * fcl * ((t_cl + 273.0) ** 4 - (t_r + 273.0) ** 4)
        - fcl * hc * (t_cl - t_a)
    )
    return (0.303 * np.exp(-0.036 * M) + 0.028) * L


pmv_grid = np.vectorize(pmv_exact, excluded={2})


# --------------------------------------------------------------------------
# piecewise-affine surrogate


@dataclass(frozen=True)
class PwaFitReport:
    mae: float
    max_abs_err: float
    grid_size: int
    domain: tuple
    continuity_gap: float


class PwaEval(NamedTuple):
    pmv: float
    region: int
    extrapolated: bool


@dataclass(frozen=True)
class PwaComfortModel:
    """Four affine pieces of ``t_cl`` over the quadrants around ``split``.

    Region index is ``2 * (t_a > ta*) + (t_r > tr*)``, so regions 0..3 hold
    the linearization points (lo, lo), (lo, hi), (hi, lo), (hi, hi).  Points
    on a split line belong to the lower side.  Outside ``domain`` the
    quadrant's piece is extrapolated.
    """

    split: tuple
    domain: tuple  # ((ta_lo, ta_hi), (tr_lo, tr_hi))
    coef: np.ndarray  # (4, 3): t_cl ~ a1 t_a + a2 t_r + a3
    params: ComfortParams
    report: PwaFitReport | None = None
    pmv_affine: dict = field(default_factory=lambda: dict(PMV_AFFINE))
    pa_affine: dict = field(default_factory=lambda: dict(PA_AFFINE))

    def region_of(self, t_a, t_r):
        t_a, t_r = np.asarray(t_a), np.asarray(t_r)
        return 2 * (t_a > self.split[0]).astype(int) + (t_r > self.split[1]).astype(int)

    def region_bounds(self, s: int) -> tuple:
        """Rectangle of region ``s`` clipped to the fit domain."""
        (a0, a1), (r0, r1) = self.domain
        ta = (a0, self.split[0]) if s // 2 == 0 else (self.split[0], a1)
        tr = (r0, self.split[1]) if s % 2 == 0 else (self.split[1], r1)
        return ta, tr

    def in_domain(self, t_a, t_r):
        (a0, a1), (r0, r1) = self.domain
        t_a, t_r = np.asarray(t_a), np.asarray(t_r)
        return (t_a >= a0) & (t_a <= a1) & (t_r >= r0) & (t_r <= r1)

    def tcl_hat(self, t_a, t_r, region=None):
        t_a, t_r = np.asarray(t_a, dtype=float), np.asarray(t_r, dtype=float)
        s = self.region_of(t_a, t_r) if region is None else np.asarray(region)
        c = self.coef[s]
        return c[..., 0] * t_a + c[..., 1] * t_r + c[..., 2]

    def pmv_coefficients(self, s: int) -> tuple[float, float, float]:
        """PMV-hat on region ``s`` as ``k_a t_a + k_r t_r + k_0``."""
        a1, a2, a3 = self.coef[s]
        k, pa = self.pmv_affine, self.pa_affine
        phi = self.params.Phi
        k_a = k["p_a"] * phi * pa["slope"] * pa["scale"] + k["t_a"] + k["t_cl"] * a1
        k_r = k["t_cl"] * a2
        k_0 = k["p_a"] * phi * pa["intercept"] * pa["scale"] + k["t_cl"] * a3 + k["const"]
        return float(k_a), float(k_r), float(k_0)

    def pmv_hat(self, t_a, t_r, region=None):
        t_a, t_r = np.asarray(t_a, dtype=float), np.asarray(t_r, dtype=float)
        k, pa = self.pmv_affine, self.pa_affine
        p_hat = self.params.Phi * (pa["slope"] * t_a + pa["intercept"]) * pa["scale"]
        return k["p_a"] * p_hat + k["t_a"] * t_a + k["t_cl"] * self.tcl_hat(t_a, t_r, region) + k["const"]

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kind": "pwa-comfort-model",
            "version": 1,
            "split": [float(v) for v in self.split],
            "domain": [[float(v) for v in ax] for ax in self.domain],
            "regions": [
                {
                    "index": s,
                    "bounds": [list(map(float, b)) for b in self.region_bounds(s)],
                    "a1": float(self.coef[s, 0]),
                    "a2": float(self.coef[s, 1]),
                    "a3": float(self.coef[s, 2]),
                }
                for s in range(4)
            ],
            "pmv_affine": dict(self.pmv_affine),
            "pa_affine": dict(self.pa_affine),
            "params": asdict(self.params),
            "report": None if self.report is None else _report_dict(self.report),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PwaComfortModel":
        if d.get("kind") != "pwa-comfort-model":
            raise ValueError("not a PWA comfort model file")
        coef = np.array([[r["a1"], r["a2"], r["a3"]] for r in sorted(d["regions"], key=lambda r: r["index"])])
        rep = d.get("report")
        report = None
        if rep is not None:
            report = PwaFitReport(
                mae=rep["mae"], max_abs_err=rep["max_abs_err"], grid_size=rep["grid_size"],
                domain=tuple(tuple(ax) for ax in rep["domain"]), continuity_gap=rep["continuity_gap"],
            )
        return cls(
            split=tuple(d["split"]),
            domain=tuple(tuple(ax) for ax in d["domain"]),
            coef=coef,
            params=ComfortParams(**d["params"]),
            report=report,
            pmv_affine=dict(d["pmv_affine"]),
            pa_affine=dict(d["pa_affine"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PwaComfortModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _report_dict(r: PwaFitReport) -> dict:
    return {
        "mae": float(r.mae),
        "max_abs_err": float(r.max_abs_err),
        "grid_size": int(r.grid_size),
        "domain": [[float(v) for v in ax] for ax in r.domain],
        "continuity_gap": float(r.continuity_gap),
    }


def pmv_pwa(model: PwaComfortModel, t_a: float, t_r: float) -> PwaEval:
    """Evaluate the surrogate; also return the region and an extrapolation flag."""
    s = int(model.region_of(t_a, t_r))
    return PwaEval(float(model.pmv_hat(t_a, t_r, s)), s, not bool(model.in_domain(t_a, t_r)))


def _shared_edges(split, domain, n):
    """Sample points on the four split-line segments and the region pairs sharing them."""
    (a0, a1), (r0, r1) = domain
    sa, sr = split
    edges = []
    for lo, hi, pair in ((r0, sr, (0, 2)), (sr, r1, (1, 3))):
        tr = np.linspace(lo, hi, n)
        edges.append((np.full(n, sa), tr, pair))
    for lo, hi, pair in ((a0, sa, (0, 1)), (sa, a1, (2, 3))):
        ta = np.linspace(lo, hi, n)
        edges.append((ta, np.full(n, sr), pair))
    return edges


def fit_pwa(
    params: ComfortParams,
    domain=((22.0, 30.0), (22.0, 30.0)),
    split=None,
    *,
    samples: int = 25,
    continuity_weight: float = 1e3,
    edge_points: int = 50,
    eval_grid: int = 20,
    target: Callable[[float, float], float] | None = None,
    min_width: float = 0.5,
    affine: str = "fixed",
) -> PwaComfortModel:
    """Fit the four affine ``t_cl`` pieces by penalized least squares.

    Each region contributes a ``samples x samples`` grid of exact ``t_cl``
    values; squared mismatches between neighbouring pieces on the shared
    edges are added with weight ``continuity_weight``.  ``target`` replaces
    the exact clothing temperature (used for testing).

    ``affine="fixed"`` keeps the published surrogate coefficients, which are
    tuned to light summer clothing; ``"derived"`` recomputes them for
    ``params`` (see :func:`derived_pmv_affine`).
    """
    if affine == "fixed":
        pmv_affine = dict(PMV_AFFINE)
    elif affine == "derived":
        pmv_affine = derived_pmv_affine(params)
    else:
        raise ValueError(f"affine must be 'fixed' or 'derived', not {affine!r}")
    domain = tuple((float(lo), float(hi)) for lo, hi in domain)
    (a0, a1), (r0, r1) = domain
    if split is None:
        split = (0.5 * (a0 + a1), 0.5 * (r0 + r1))
    split = (float(split[0]), float(split[1]))
    if not (a0 < split[0] < a1 and r0 < split[1] < r1):
        raise PwaFitError(f"split point {split} must lie strictly inside the domain {domain}")
    widths = [split[0] - a0, a1 - split[0], split[1] - r0, r1 - split[1]]
    if min(widths) < min_width:
        raise PwaFitError(f"degenerate region: side {min(widths):.3g} degC below {min_width} degC")

    if target is None:
        def target(ta, tr):
            return solve_tcl(ta, tr, params)[0]

    rows, rhs = [], []
    probe = PwaComfortModel(split=split, domain=domain, coef=np.zeros((4, 3)), params=params)
    for s in range(4):
        (ta_lo, ta_hi), (tr_lo, tr_hi) = probe.region_bounds(s)
        TA, TR = np.meshgrid(np.linspace(ta_lo, ta_hi, samples), np.linspace(tr_lo, tr_hi, samples), indexing="ij")
        ta, tr = TA.ravel(), TR.ravel()
        X = np.column_stack([ta, tr, np.ones_like(ta)])
        if np.linalg.cond(np.column_stack([ta - ta.mean(), tr - tr.mean(), np.ones_like(ta)])) > 1e8:
            raise PwaFitError(f"ill-conditioned fit in region {s}")
        block = np.zeros((X.shape[0], 12))
        block[:, 3 * s: 3 * s + 3] = X
        rows.append(block)
        rhs.append(np.array([target(a, r) for a, r in zip(ta, tr)]))

    w = np.sqrt(continuity_weight)
    for ta, tr, (p, q) in _shared_edges(split, domain, samples):
        X = np.column_stack([ta, tr, np.ones_like(ta)])
        block = np.zeros((X.shape[0], 12))
        block[:, 3 * p: 3 * p + 3] = w * X
        block[:, 3 * q: 3 * q + 3] = -w * X
        rows.append(block)
        rhs.append(np.zeros(X.shape[0]))

    D = np.vstack(rows)
    y = np.concatenate(rhs)
    sol, *_ = np.linalg.lstsq(D, y, rcond=None)
    coef = sol.reshape(4, 3)
    if not np.all(np.isfinite(coef)):
        raise PwaFitError("non-finite PWA coefficients")

    model = PwaComfortModel(split=split, domain=domain, coef=coef, params=params, pmv_affine=pmv_affine)
    report = evaluate_fit(model, grid=eval_grid, edge_points=edge_points)
    return PwaComfortModel(
        split=split, domain=domain, coef=coef, params=params, report=report, pmv_affine=pmv_affine
    )


def continuity_gap(model: PwaComfortModel, edge_points: int = 50) -> float:
    gap = 0.0
    for ta, tr, (p, q) in _shared_edges(model.split, model.domain, edge_points):
        gap = max(gap, float(np.max(np.abs(model.tcl_hat(ta, tr, p) - model.tcl_hat(ta, tr, q)))))
    return gap


def evaluate_fit(model: PwaComfortModel, grid: int = 20, edge_points: int = 50) -> PwaFitReport:
    """MAE and max error of PMV-hat against exact PMV on a uniform grid."""
    (a0, a1), (r0, r1) = model.domain
    TA, TR = np.meshgrid(np.linspace(a0, a1, grid), np.linspace(r0, r1, grid), indexing="ij")
    exact = pmv_grid(TA, TR, model.params)
    err = np.abs(exact - model.pmv_hat(TA, TR))
    return PwaFitReport(
        mae=float(err.mean()),
        max_abs_err=float(err.max()),
        grid_size=grid * grid,
        domain=model.domain,
        continuity_gap=continuity_gap(model, edge_points),
    )


def derived_pmv_affine(params: ComfortParams) -> dict:
    """Surrogate coefficients obtained by substituting the clothing heat
    balance into the PMV load, for arbitrary ``params`` (needs ``I_cl > 0``).

    With exact ``t_cl`` and ``p_a`` this affine form reproduces PMV exactly.
    """
    if params.I_cl <= 0:
        raise ValueError("derived coefficients need I_cl > 0")
    M, mw, I = params.M, params.M - params.W, params.I_cl
    lead = 0.303 * np.exp(-0.036 * M) + 0.028
    const = (
        mw
        - 3.05 * (5.733 - 0.007 * mw)
        - 0.42 * (mw - 58.15)
        - 0.0173 * M * 5.867
        - 0.0014 * M * 34.0
        - (35.7 - 0.0275 * mw) / I
    )
    return {
        "p_a": float(lead * (3.05 + 0.0173 * M)),
        "t_a": float(lead * 0.0014 * M),
        "t_cl": float(lead / I),
        "const": float(lead * const),
    }


def comfort_gap_bound(N: int, p_bar: float, eps_max: float) -> float:
    """Worst-case difference between exact and surrogate comfort costs over a horizon."""
    if N < 0 or p_bar < 0 or eps_max < 0:
        raise ValueError("arguments must be non-negative")
    return 2.0 * N * p_bar * eps_max


def comfort_cost(pmv: Sequence[float], occupancy: Sequence[float]) -> float:
    pmv, occupancy = np.asarray(pmv, dtype=float), np.asarray(occupancy, dtype=float)
    return float(np.sum(occupancy * pmv**2))

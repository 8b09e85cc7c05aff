"""Dense convex QP solvers.

``solve_qp`` is a primal active-set method for

    minimize    1/2 x'Hx + g'x
    subject to  lo <= x <= hi,   G x <= h

with ``H`` symmetric positive definite.  Bounds in the working set are
handled by fixing variables; general rows enter the equality-constrained
subproblem through its KKT system.  ``solve_box_qp`` is the bound-only case
used for the per-zone ADMM updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_ITER = 10_000
KKT_TOL = 1e-8


class QpError(RuntimeError):
    """Iteration cap hit or infeasible start; carries the best iterate."""

    def __init__(self, msg, x=None, kkt_residual=float("nan"), iterations=0):
        super().__init__(msg)
        self.x = x
        self.kkt_residual = kkt_residual
        self.iterations = iterations


@dataclass(frozen=True)
class BoxQp:
    """``minimize 1/2 u'Hu + g'u`` over ``lo <= u <= hi``."""

    H: np.ndarray
    g: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        n = H.shape[0]
        g, lo, hi = (np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy() for v in (self.g, self.lo, self.hi))
        if H.shape != (n, n):
            raise ValueError("H must be square")
        if not np.allclose(H, H.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(H).max())):
            raise ValueError("H must be symmetric")
        if np.any(lo > hi):
            raise ValueError("lo must not exceed hi")
        for name, v in (("H", H), ("g", g), ("lo", lo), ("hi", hi)):
            object.__setattr__(self, name, v)

    @property
    def n(self) -> int:
        return self.g.shape[0]

    def objective(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(0.5 * u @ self.H @ u + self.g @ u)


@dataclass(frozen=True)
class Polyhedron:
    """Rows ``A[k] @ u <= b[k]``."""

    A: np.ndarray
    b: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "Polyhedron":
        return cls(np.zeros((0, n)), np.zeros(0))

    @property
    def rows(self) -> int:
        return self.b.shape[0]


@dataclass
class QpResult:
    x: np.ndarray
    iterations: int
    objective: float
    kkt_residual: float
    history: list = field(default_factory=list)

    def __iter__(self):
        # allows ``u, iterations = solve_box_qp(...)``
        return iter((self.x, self.iterations))


def membership_margin(poly: Polyhedron, u) -> float:
    """``min_k (b_k - A_k u)``; positive iff ``u`` is strictly interior."""
    if poly.rows == 0:
        return float("inf")
    u = np.asarray(u, dtype=float)
    if poly.A.shape[1] != u.shape[0]:
        raise ValueError("dimension mismatch between polyhedron and point")
    return float(np.min(poly.b - poly.A @ u))


def box_kkt_residual(H, g, lo, hi, x) -> float:
    """Largest violation of the bound-constrained optimality conditions."""
    grad = H @ x + g
    at_lo = x <= lo
    at_hi = x >= hi
    r = np.abs(grad)
    r = np.where(at_lo & ~at_hi, np.maximum(0.0, -grad), r)
    r = np.where(at_hi & ~at_lo, np.maximum(0.0, grad), r)
    r = np.where(at_lo & at_hi, 0.0, r)
    return float(r.max(initial=0.0))


def _objective(H, g, x):
    return float(0.5 * x @ H @ x + g @ x)


def solve_qp(H, g, lo, hi, G=None, h=None, x0=None, *, tol=KKT_TOL, max_iter=MAX_ITER, record=False) -> QpResult:
    """Primal active-set solve from a feasible start.

    ``x0`` is clamped into the bounds; it must satisfy ``G x0 <= h``.  When
    omitted, the clamped unconstrained minimizer is used (bound-only
    problems) or ``lo`` (with general rows).
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
    if G is None:
        G = np.zeros((0, n))
        h = np.zeros(0)
    G = np.asarray(G, dtype=float).reshape(-1, n)
    h = np.asarray(h, dtype=float).reshape(-1)
    m = G.shape[0]

    if x0 is None:
        if m == 0:
            try:
                x0 = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                x0 = np.zeros(n)
        else:
            x0 = lo.copy()
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    scale_h = 1.0 + np.abs(h).max(initial=0.0)
    if m and np.max(G @ x - h) > 1e-9 * scale_h:
        raise QpError("starting point violates the general constraints", x=x)

    fixed_lo = x <= lo  # ties go to the lower bound
    fixed_hi = (x >= hi) & ~fixed_lo
    in_rows = np.zeros(m, dtype=bool)
    mtol = tol * max(1.0, np.abs(g).max(initial=0.0))  # multiplier sign tolerance, scaled like g
    history = [_objective(H, g, x)] if record else []
    single_drop = False
    it = 0
    for it in range(1, max_iter + 1):
        free = ~(fixed_lo | fixed_hi)
        grad = H @ x + g
        fi = np.flatnonzero(free)
        if fi.size == 0:
            in_rows[:] = False  # every variable sits on a bound; rows are redundant
        rows = np.flatnonzero(in_rows)
        p = np.zeros(n)
        nu = np.zeros(0)
        if fi.size:
            Hff = H[np.ix_(fi, fi)]
            if rows.size:
                Gf = G[np.ix_(rows, fi)]
                K = np.block([[Hff, Gf.T], [Gf, np.zeros((rows.size, rows.size))]])
                rhs = np.concatenate([-grad[fi], np.zeros(rows.size)])
                try:
                    sol = np.linalg.solve(K, rhs)
                except np.linalg.LinAlgError:
                    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
                p[fi] = sol[: fi.size]
                nu = sol[fi.size:]
            else:
                p[fi] = np.linalg.solve(Hff, -grad[fi])

        if np.max(np.abs(p), initial=0.0) <= 1e-13 * (1.0 + np.max(np.abs(x), initial=0.0)):
            # stationary on the working set: check multiplier signs
            mu = grad + (G[rows].T @ nu if rows.size else 0.0)
            signed = np.full(n, np.inf)
            signed[fixed_lo] = mu[fixed_lo]
            signed[fixed_hi] = -mu[fixed_hi]
            signed[lo == hi] = np.inf
            row_signed = nu
            worst_b = signed.min(initial=np.inf)
            worst_r = row_signed.min(initial=np.inf)
            if min(worst_b, worst_r) >= -mtol:
                break
            if single_drop:
                if worst_b <= worst_r:
                    j = int(np.argmin(signed))
                    fixed_lo[j] = fixed_hi[j] = False
                else:
                    in_rows[rows[int(np.argmin(row_signed))]] = False
                single_drop = False
            else:
                drop = signed < -mtol
                fixed_lo &= ~drop
                fixed_hi &= ~drop
                if worst_r < -mtol:
                    in_rows[rows[row_signed < -mtol]] = False
                single_drop = True
            continue

        # ratio test over inactive constraints
        alpha, block = 1.0, None
        neg = free & (p < 0)
        pos = free & (p > 0)
        if neg.any():
            ratios = (lo[neg] - x[neg]) / p[neg]
            k = int(np.argmin(ratios))
            if ratios[k] < alpha:
                alpha, block = max(ratios[k], 0.0), ("lo", int(np.flatnonzero(neg)[k]))
        if pos.any():
            ratios = (hi[pos] - x[pos]) / p[pos]
            k = int(np.argmin(ratios))
            if ratios[k] < alpha:
                alpha, block = max(ratios[k], 0.0), ("hi", int(np.flatnonzero(pos)[k]))
        if m:
            Gp = G @ p
            cand = (~in_rows) & (Gp > 1e-14 * (1.0 + np.abs(G).max()))
            if cand.any():
                ratios = (h[cand] - G[cand] @ x) / Gp[cand]
                k = int(np.argmin(ratios))
                if ratios[k] < alpha:
                    alpha, block = max(ratios[k], 0.0), ("row", int(np.flatnonzero(cand)[k]))

        x = x + alpha * p
        if block is None:
            single_drop = False
        else:
            kind, j = block
            if kind == "lo":
                x[j] = lo[j]
                fixed_lo[j] = True
            elif kind == "hi":
                x[j] = hi[j]
                fixed_hi[j] = True
            else:
                in_rows[j] = True
            if alpha > 0:
                single_drop = False
        x = np.clip(x, lo, hi)
        if record:
            history.append(_objective(H, g, x))
    else:
        res = box_kkt_residual(H, g, lo, hi, x) if m == 0 else float("nan")
        raise QpError(f"active-set iteration cap ({max_iter}) exceeded", x=x, kkt_residual=res, iterations=max_iter)

    res = box_kkt_residual(H, g, lo, hi, x) if m == 0 else 0.0
    return QpResult(x=x, iterations=it, objective=_objective(H, g, x), kkt_residual=res, history=history)


def solve_box_qp(qp: BoxQp, warm=None, *, tol=KKT_TOL, max_iter=MAX_ITER, record=False) -> QpResult:
    """Minimize a strictly convex quadratic over a box."""
    res = solve_qp(qp.H, qp.g, qp.lo, qp.hi, x0=warm, tol=tol, max_iter=max_iter, record=record)
    if res.kkt_residual > tol * max(1.0, np.abs(qp.g).max(initial=0.0)):
        raise QpError("KKT residual above tolerance", x=res.x, kkt_residual=res.kkt_residual, iterations=res.iterations)
    return res

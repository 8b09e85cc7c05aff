from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from instances import config, random_zones, summer_pwa
from oracles import cvxpy_qp, p4_resolve, region_enumeration
from pwadmpc.admm import AdmmConfig
from pwadmpc.mpc import (
    DaySchedule,
    MpcConfig,
    Schedules,
    ZoneHorizon,
    build_subproblem,
    detect_regions,
    interior_eps,
    operating_points,
    p2_objective,
    solve,
    solve_centralized_linear,
    solve_centralized_pwa,
    solve_convex_admm,
    stacked_qp,
)
from pwadmpc.thermal import mean_radiant

PWA = summer_pwa()
TIGHT = AdmmConfig(max_iter=3000, T_d=30, tol=1e-6)


def direct_cost(zone, u, alpha, regions=None):
    """Horizon cost from simulated states and the surrogate, term by term."""
    X = zone.prediction.predict(u)
    total = 0.0
    for l in range(len(u)):
        ta, tr = X[l, 0], mean_radiant(X[l])
        s = None if regions is None else int(regions[l])
        total += alpha * zone.sched.occupancy[l] * float(PWA.pmv_hat(ta, tr, s)) ** 2
        total += zone.sched.tariff[l] * u[l] ** 2
    return total


# -- schedules --------------------------------------------------------------------


def test_tariff_bands():
    d = DaySchedule()
    assert d.tariff_at(3 * 3600) == 0.3358
    assert d.tariff_at(8 * 3600) == 0.6629
    assert d.tariff_at(15 * 3600) == 1.0881
    assert d.tariff_at(18 * 3600) == 0.6629
    assert d.tariff_at(20 * 3600) == 1.0881
    assert d.tariff_at(23.5 * 3600) == 0.6629


def test_horizon_wraps_past_midnight():
    s = DaySchedule().horizon(23 * 3600, 8, 900)
    assert s.tariff.tolist() == [0.6629] * 4 + [0.3358] * 4
    assert not s.occupancy.any()
    again = DaySchedule().horizon(47 * 3600, 8, 900)
    assert np.array_equal(s.tariff, again.tariff)


def test_occupancy_refers_to_predicted_states():
    s = DaySchedule().horizon(9.75 * 3600, 2, 900)
    assert s.occupancy.tolist() == [1.0, 1.0]
    assert s.tariff.tolist() == [0.6629, 0.6629]
    end = DaySchedule().horizon(19.5 * 3600, 3, 900)
    assert end.occupancy.tolist() == [1.0, 0.0, 0.0]


def test_schedule_validation():
    with pytest.raises(ValueError):
        DaySchedule(tariff_bands=((0, 12, 1.0), (13, 24, 1.0)))
    with pytest.raises(ValueError):
        Schedules(occupancy=[0.5], tariff=[1.0])


def test_default_budget():
    assert np.array_equal(MpcConfig().budget(36), np.full(12, 0.8 * 36 * 2000))
    assert MpcConfig(N=3, c_max=[1, 2, 3]).budget(5).tolist() == [1, 2, 3]
    with pytest.raises(ValueError):
        MpcConfig(u_min=5, u_max=1)


# -- cost assembly ----------------------------------------------------------------


def test_zero_weight_leaves_tariff_only():
    z = random_zones(np.random.default_rng(0), 1, 6)[0]
    sub = build_subproblem(z, PWA, np.zeros(6), config(6, alpha=0.0))
    assert np.array_equal(sub.H, np.diag(z.sched.tariff))
    assert not sub.g.any() and sub.const == 0.0


def test_unoccupied_horizon_leaves_tariff_only():
    z = random_zones(np.random.default_rng(1), 1, 4, hour=2.0)[0]
    sub = build_subproblem(z, PWA, np.zeros(4), config(4))
    assert np.array_equal(sub.H, np.diag(z.sched.tariff))
    assert sub.region_polyhedron.rows == 0


@pytest.mark.parametrize("seed", range(5))
def test_quadratic_matches_direct_evaluation(seed):
    rng = np.random.default_rng(seed)
    z = random_zones(rng, 1, 8)[0]
    cfg = config(8)
    ref = rng.uniform(0, 2000, 8)
    sub = build_subproblem(z, PWA, ref, cfg)
    for _ in range(5):
        u = rng.uniform(0, 2000, 8)
        assert sub.objective(u) == pytest.approx(direct_cost(z, u, cfg.alpha, sub.active_regions), rel=1e-10)
        assert sub.box_cost().objective(u) + sub.const == pytest.approx(sub.objective(u), rel=1e-10)
        assert np.allclose(sub.pmv(u), [PWA.pmv_hat(a, r, s) for a, r, s in
                                        zip(*operating_points(z.prediction, u), sub.active_regions)], atol=1e-10)


def test_piecewise_objective_uses_own_regions():
    rng = np.random.default_rng(9)
    z = random_zones(rng, 1, 8)[0]
    for _ in range(10):
        u = rng.uniform(0, 2000, 8)
        assert p2_objective(z, PWA, u, config(8)) == pytest.approx(direct_cost(z, u, config(8).alpha), rel=1e-10)


def test_horizon_mismatch_rejected():
    z = random_zones(np.random.default_rng(0), 1, 4)[0]
    with pytest.raises(ValueError):
        build_subproblem(z, PWA, np.zeros(4), config(5))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_polyhedron_membership_agrees_with_detection(seed):
    rng = np.random.default_rng(seed)
    z = random_zones(rng, 1, 6, T_range=(25.0, 27.0))[0]
    cfg = config(6)
    ref = rng.uniform(0, 2000, 6)
    sub = build_subproblem(z, PWA, ref, cfg)
    occ = z.sched.occupancy == 1
    assert sub.margin(ref) >= -1e-9
    u = rng.uniform(0, 2000, 6)
    same = np.array_equal(detect_regions(PWA, z.prediction, u)[occ], sub.active_regions[occ])
    m = sub.margin(u)
    if abs(m) > 1e-9:
        assert (m > 0) == same


def test_restart_point_crosses_violated_row():
    rng = np.random.default_rng(3)
    for _ in range(50):
        z = random_zones(rng, 1, 6, T_range=(25.5, 26.5))[0]
        sub = build_subproblem(z, PWA, np.full(6, 500.0), config(6))
        if sub.region_polyhedron.rows == 0:
            continue
        u = rng.uniform(0, 2000, 6)
        A, b = sub.region_polyhedron.A, sub.region_polyhedron.b
        k = int(np.argmin(b - A @ u))
        v = sub.restart_point(u)
        assert np.all((v >= 0) & (v <= 2000))
        if np.array_equal(v, u + ((b[k] + sub.push[k] - A[k] @ u) / (A[k] @ A[k])) * A[k]):
            assert A[k] @ v == pytest.approx(b[k] + sub.push[k])


# -- strategies ---------------------------------------------------------------------


def test_unknown_strategy():
    zones = random_zones(np.random.default_rng(0), 2, 3)
    with pytest.raises(ValueError, match="distributed-pwa"):
        solve("none", zones, PWA, config(3))


@pytest.mark.parametrize("strategy", ["distributed-pwa", "centralized-pwa", "centralized-linear"])
def test_zero_weight_gives_zero_input(strategy):
    zones = random_zones(np.random.default_rng(2), 3, 4)
    rep = solve(strategy, zones, PWA, config(4, alpha=0.0), warm=np.full((3, 4), 700.0))
    assert np.allclose(rep.u_star, 0.0, atol=1e-3)  # ADMM stops at r < 1e-3


def test_single_zone_distributed_equals_centralized():
    zones = random_zones(np.random.default_rng(4), 1, 8)
    cfg = config(8)
    d = solve_convex_admm(zones, PWA, cfg, TIGHT)
    c = solve_centralized_pwa(zones, PWA, cfg)
    assert d.objective == pytest.approx(c.objective, rel=1e-6)


def test_linear_equals_pwa_when_every_step_is_in_the_linear_piece():
    zones = random_zones(np.random.default_rng(5), 2, 4, T_range=(28.0, 29.0))
    cfg = config(4)
    c = solve_centralized_pwa(zones, PWA, cfg)
    s = int(c.regions[0, 0])
    assert np.all(c.regions == s)
    (a0, a1), (r0, r1) = PWA.region_bounds(s)
    lin = solve_centralized_linear(zones, PWA, cfg, point=(0.5 * (a0 + a1), 0.5 * (r0 + r1)))
    assert np.allclose(lin.u_star, c.u_star, atol=1e-6)


def test_centralized_budget_rows_bind():
    zones = random_zones(np.random.default_rng(6), 4, 4, T_range=(27.5, 29.0))
    free = solve_centralized_pwa(zones, PWA, config(4))
    c_max = 0.5 * free.u_star.sum(axis=0).max()
    rep = solve_centralized_pwa(zones, PWA, config(4, c_max=c_max))
    total = rep.u_star.sum(axis=0)
    assert np.all(total <= c_max + 1e-6)
    assert np.any(np.isclose(total, c_max, rtol=1e-9))


def test_stacked_qp_matches_conic_solver():
    zones = random_zones(np.random.default_rng(7), 3, 4, T_range=(27.0, 29.0))
    cfg = config(4)
    subs = [build_subproblem(z, PWA, np.zeros(4), cfg, regions=np.full(4, 3)) for z in zones]
    c_max = np.full(4, 2500.0)
    H, g, lo, hi, G, h = stacked_qp(subs, c_max)
    x, f = cvxpy_qp(H, g, lo, hi, G, h)
    rep = solve_centralized_linear(zones, PWA, cfg, point=(27.0, 27.0))
    ours = sum(s.box_cost().objective(u) for s, u in zip(subs, rep.u_star))
    assert ours == pytest.approx(f, rel=1e-7)


def test_distributed_is_order_independent():
    zones = random_zones(np.random.default_rng(8), 5, 6)
    cfg = config(6, c_max=3000.0)
    a = solve_convex_admm(zones, PWA, cfg)
    with ThreadPoolExecutor(4) as pool:
        b = solve_convex_admm(zones, PWA, cfg, map_fn=pool.map)
    assert np.array_equal(a.u_star, b.u_star)
    assert a.admm_iterations == b.admm_iterations


def test_distributed_reports_interiority():
    zones = random_zones(np.random.default_rng(10), 4, 6)
    rep = solve_convex_admm(zones, PWA, config(6))
    assert rep.interior_margins.shape == (4,)
    assert rep.degraded == bool(np.any(rep.interior_margins < interior_eps(PWA)))
    assert rep.wall_time["total"] >= rep.wall_time["local"]


@pytest.mark.parametrize("seed", range(3))
def test_two_by_two_matches_region_enumeration(seed):
    rng = np.random.default_rng(seed)
    zones = random_zones(rng, 2, 2)
    c_max = rng.uniform(1000, 4000)
    cfg = config(2, c_max=c_max)
    _, f_ref = region_enumeration(zones, PWA, cfg.alpha, cfg.u_min, cfg.u_max, c_max)
    rep = solve_convex_admm(zones, PWA, cfg, TIGHT)
    assert rep.objective <= f_ref * 1.01
    assert rep.objective >= f_ref * (1 - 1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_distributed_solution_is_locally_optimal(seed):
    rng = np.random.default_rng(20 + seed)
    zones = random_zones(rng, 3, 4)
    cfg = config(4, c_max=rng.uniform(1500, 5000))
    rep = solve_convex_admm(zones, PWA, cfg)
    assert not rep.degraded
    subs = [build_subproblem(z, PWA, u, cfg) for z, u in zip(zones, rep.u_star)]
    # subregion consistency: the plan lives in the regions it was priced with
    for z, s, u in zip(zones, subs, rep.u_star):
        occ = z.sched.occupancy == 1
        assert np.array_equal(detect_regions(PWA, z.prediction, u)[occ], s.active_regions[occ])
    _, f4 = p4_resolve(subs, cfg.budget(3))
    assert (rep.objective - f4) / rep.objective < 1e-6


@pytest.mark.parametrize("seed", range(4))
def test_centralized_weakly_better_on_four_zones(seed):
    rng = np.random.default_rng(40 + seed)
    zones = random_zones(rng, 4, 6)
    cfg = config(6, c_max=rng.uniform(2000, 6000))
    c = solve_centralized_pwa(zones, PWA, cfg)
    d = solve_convex_admm(zones, PWA, cfg)
    assert c.objective <= d.objective * (1 + 1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_objective_ordering_and_budget_for_all_strategies(seed):
    rng = np.random.default_rng(60 + seed)
    zones = random_zones(rng, 4, 6)
    c_max = rng.uniform(2000, 6000)
    cfg = config(6, c_max=c_max)
    reps = {s: solve(s, zones, PWA, cfg) for s in ("distributed-pwa", "centralized-pwa", "centralized-linear")}
    assert reps["centralized-pwa"].objective <= 1.01 * reps["distributed-pwa"].objective
    assert reps["distributed-pwa"].objective <= 1.01 * reps["centralized-linear"].objective
    for r in reps.values():
        total = r.u_star.sum(axis=0)
        assert np.all(total <= c_max * (1 + 1e-4)) and np.all(total >= -1e-4 * c_max)

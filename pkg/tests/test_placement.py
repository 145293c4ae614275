import numpy as np
import pytest

from mimoplace import (ArrayGeometry, PlacementConstraints, SamplerConfig,
                       Scenario, local_optimize, omega_separation_interval,
                       optimize_single_target, placement_cost,
                       random_feasible_geometry, sample_restart_optimize,
                       steering_workspace)

from conftest import LAM, make_radar, single_target, transceiver_scenario

CONS = PlacementConstraints(d=LAM, e=2 * LAM)
FAST = SamplerConfig(restarts=6, patience=4, seed=0)


class TestPlacementCost:
    def test_noise_monotonicity(self, table1_scenario):
        base = placement_cost(table1_scenario)
        noisy = Scenario(
            radar=make_radar(2, noise_var=4.0),
            array=table1_scenario.array,
            constraints=table1_scenario.constraints,
            targets=table1_scenario.targets)
        assert placement_cost(noisy) > base

    def test_duplicate_targets_singular(self):
        from mimoplace import SingularFim
        t = single_target()
        s = transceiver_scenario([[0.2, 0.0], [-0.2, 0.0]], [t, t])
        with pytest.raises(SingularFim):
            placement_cost(s)


class TestLocalOptimize:
    def test_fixed_point(self, table1_scenario):
        # re-optimizing from an optimum barely moves the cost
        sol = optimize_single_target(table1_scenario.targets[0], 2, 2,
                                     "transceiver", CONS)
        s_opt = table1_scenario.with_geometry(sol.geometry)
        start = placement_cost(s_opt)
        geom, cost, info = local_optimize(table1_scenario, sol.geometry,
                                          FAST)
        assert cost <= start + 1e-12
        assert start - cost <= 1e-6 * start
        assert info["ring_violation"] <= 1e-8

    def test_matches_sdp_route_single_target(self, table1_scenario):
        # trace minimization and the lifted quadratic route agree for a
        # single target on a transceiver array
        rng = np.random.default_rng(30)
        init = random_feasible_geometry(rng, "transceiver", 2, 2, CONS)
        geom, cost, _ = local_optimize(table1_scenario, init,
                                       SamplerConfig(restarts=1, patience=1))
        sol = optimize_single_target(table1_scenario.targets[0], 2, 2,
                                     "transceiver", CONS)
        sdp_cost = placement_cost(table1_scenario.with_geometry(sol.geometry))
        assert cost == pytest.approx(sdp_cost, rel=1e-4)

    def test_feasibility_over_random_runs(self, table1_scenario):
        rng = np.random.default_rng(31)
        for _ in range(10):
            init = random_feasible_geometry(rng, "transceiver", 2, 2, CONS)
            _, _, info = local_optimize(table1_scenario, init, FAST)
            assert info["ring_violation"] <= 1e-8


class TestRandomFeasible:
    def test_rings_and_centroid(self):
        rng = np.random.default_rng(32)
        for mode, m, n in (("transceiver", 4, 4), ("separate", 3, 2)):
            geom = random_feasible_geometry(rng, mode, m, n, CONS)
            assert CONS.violations(geom) == 0.0
            assert np.linalg.norm(geom.joint_centroid_sum()) < 1e-9


class TestRestartLoop:
    def test_best_costs_non_increasing(self, two_target_scenario):
        result, trace = sample_restart_optimize(two_target_scenario, FAST)
        seq = trace.best_costs
        assert all(b <= a + 1e-15 for a, b in zip(seq, seq[1:]))
        assert np.isfinite(result.cost)
        assert CONS.violations(result.geometry) <= 1e-8

    def test_deterministic(self, two_target_scenario):
        r1, t1 = sample_restart_optimize(two_target_scenario, FAST)
        r2, t2 = sample_restart_optimize(two_target_scenario, FAST)
        assert r1.cost == r2.cost
        assert np.array_equal(r1.geometry.tx, r2.geometry.tx)
        assert [r.final_cost for r in t1.records] == \
            [r.final_cost for r in t2.records]

    def test_patience_stops_loop(self, two_target_scenario):
        cfg = SamplerConfig(restarts=50, patience=2, seed=1)
        result, trace = sample_restart_optimize(two_target_scenario, cfg)
        assert result.restarts_run < 50

    @pytest.mark.slow
    def test_small_separation_resembles_single_target(self):
        # nearly coincident bearings: the single-bearing optimal placement
        # is close to optimal for the pair
        geom = ArrayGeometry.transceiver(
            [[0.3, 0.0], [-0.3, 0.0], [0.0, 0.3], [0.0, -0.3]])
        t1 = single_target(theta=-np.pi / 3, beta=0.33)
        t2 = single_target(theta=-np.pi / 3 + np.pi / 1000, beta=0.66)
        s = Scenario(radar=make_radar(4), array=geom, constraints=CONS,
                     targets=(t1, t2))
        cfg = SamplerConfig(restarts=12, patience=6, seed=2)
        result, _ = sample_restart_optimize(s, cfg)
        single = optimize_single_target(t1, 4, 4, "transceiver", CONS)
        cost_single_geom = placement_cost(s.with_geometry(single.geometry))
        assert result.cost <= cost_single_geom * 1.0 + 1e-12
        assert result.cost >= cost_single_geom * 0.85


class TestSeparationInterval:
    def test_zero_separation(self):
        assert omega_separation_interval(0.0, LAM, 2 * LAM, LAM) == (0.0,
                                                                     0.0)

    def test_opposite_bearings(self):
        lo, hi = omega_separation_interval(np.pi, LAM, 2 * LAM, LAM)
        assert lo == pytest.approx((4 * np.pi / LAM) * LAM, rel=1e-12)
        assert hi == pytest.approx((4 * np.pi / LAM) * 2 * LAM, rel=1e-12)

    def test_width_monotone(self):
        grid = np.linspace(0.0, np.pi, 40)
        widths = [np.subtract(*omega_separation_interval(d, LAM, 2 * LAM,
                                                         LAM)[::-1])
                  for d in grid]
        assert all(b >= a - 1e-12 for a, b in zip(widths, widths[1:]))

    def test_upper_bound_over_random_geometries(self):
        rng = np.random.default_rng(33)
        violations = 0
        for _ in range(200):
            geom = random_feasible_geometry(rng, "transceiver", 3, 3, CONS)
            th1 = float(rng.uniform(-np.pi, np.pi))
            th2 = float(rng.uniform(-np.pi, np.pi))
            s = Scenario(radar=make_radar(3), array=geom, constraints=CONS,
                         targets=(single_target(theta=th1, cell=1),
                                  single_target(theta=th2, cell=1)))
            ws = steering_workspace(s)
            _, hi = omega_separation_interval(th2 - th1, LAM, 2 * LAM, LAM)
            if np.any(np.abs(ws.omegas[0] - ws.omegas[1]) > hi + 1e-12):
                violations += 1
        assert violations == 0

    def test_lower_bound_on_aligned_construction(self):
        # columns aligned with the bearing-difference direction attain the
        # printed lower bound
        th1, th2 = 0.3, 1.1
        u1 = np.array([np.sin(th1), np.cos(th1)])
        u2 = np.array([np.sin(th2), np.cos(th2)])
        direction = (u1 - u2) / np.linalg.norm(u1 - u2)
        geom = ArrayGeometry([[0.0, 0.0]],
                             [LAM * direction], "separate")
        s = Scenario(radar=make_radar(1), array=geom, constraints=CONS,
                     targets=(single_target(theta=th1, cell=1),
                              single_target(theta=th2, cell=1)))
        ws = steering_workspace(s)
        lo, _ = omega_separation_interval(th2 - th1, LAM, 2 * LAM, LAM)
        gap = float(np.abs(ws.omegas[0] - ws.omegas[1])[0])
        assert gap == pytest.approx(lo, rel=1e-12)

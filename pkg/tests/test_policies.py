import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activeloc import oracles
from activeloc.cem import TrainerConfig, cem_optimize, write_curve_csv
from activeloc.policies import (
    ControlLimits,
    GoalNav,
    NoPath,
    PolicyArch,
    PolicyInput,
    act_avoid,
    act_learned,
    act_turn,
    compute_reward,
    load_policy,
    path_cost,
    plan_path,
    policy_features,
    quarter_minima,
    save_policy,
    steer_to,
)
from activeloc.simulator import LidarScan, SimConfig, SimState, step
from activeloc.worldmap import OccupancyGrid, Pose

LIM = ControlLimits()
FOV = math.radians(240)


def scan_of(ranges):
    return LidarScan(np.asarray(ranges, dtype=float), FOV, 10.0)


class TestTurn:
    def test_constant(self):
        a = act_turn()
        assert a == act_turn()
        assert (a.v, a.w) == (0.0, LIM.w_max)

    def test_pure_rotation_in_simulator(self):
        cells = np.zeros((40, 40), dtype=int)
        g = OccupancyGrid(cells, 0.1)
        s = SimState(Pose(2.0, 2.0, 0.0), np.random.default_rng(0))
        for _ in range(50):
            s, _ = step(s, g, act_turn(), SimConfig(n_beams=2))
        assert math.hypot(s.true_pose.x - 2.0, s.true_pose.y - 2.0) < 1e-6


class TestAvoid:
    def test_clear(self):
        a = act_avoid(scan_of(np.full(60, 10.0)))
        assert (a.v, a.w) == (LIM.v_max, 0.0)

    def test_left_quarter_turns_right(self):
        r = np.full(60, 10.0)
        r[55] = 0.3  # last beams are the leftmost
        a = act_avoid(scan_of(r))
        assert (a.v, a.w) == (0.0, -LIM.w_max)

    def test_right_quarter_turns_left(self):
        r = np.full(60, 10.0)
        r[2] = 0.3
        a = act_avoid(scan_of(r))
        assert (a.v, a.w) == (0.0, LIM.w_max)

    @pytest.mark.parametrize("beam", [20, 35])
    def test_center_backs_up(self, beam):
        r = np.full(60, 10.0)
        r[beam] = 0.3
        a = act_avoid(scan_of(r))
        assert (a.v, a.w) == (-LIM.v_max / 2, 0.0)

    def test_depends_only_on_quarter_minima(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            r = rng.uniform(0.1, 3.0, 60)
            q = np.array_split(np.arange(60), 4)
            r2 = r.copy()
            for idx in q:
                m = r[idx].min()
                r2[idx] = np.maximum(r[idx] + rng.uniform(0, 1, len(idx)), m)
                r2[idx[np.argmin(r[idx])]] = m
            np.testing.assert_array_equal(quarter_minima(scan_of(r)), quarter_minima(scan_of(r2)))
            assert act_avoid(scan_of(r)) == act_avoid(scan_of(r2))


class TestPlanner:
    def test_trivial(self):
        assert plan_path(np.ones((5, 5), bool), (2, 2), (2, 2)) == [(2, 2)]

    def test_diagonal(self):
        path = plan_path(np.ones((10, 10), bool), (0, 0), (9, 9))
        assert path_cost(path) == pytest.approx(9 * math.sqrt(2))

    def test_no_path(self):
        mask = np.ones((5, 5), bool)
        mask[:, 2] = False
        with pytest.raises(NoPath):
            plan_path(mask, (0, 0), (0, 4))
        with pytest.raises(NoPath):
            plan_path(mask, (0, 2), (0, 4))

    def test_no_corner_cutting(self):
        mask = np.ones((2, 2), bool)
        mask[0, 1] = False
        path = plan_path(mask, (0, 0), (1, 1))
        assert path == [(0, 0), (1, 0), (1, 1)]

    def test_dijkstra_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            mask = rng.random((20, 20)) > 0.3
            free = np.argwhere(mask)
            a, b = free[rng.integers(len(free), size=2)]
            want = oracles.dijkstra_cost(mask, a, b)
            try:
                path = plan_path(mask, a, b)
            except NoPath:
                assert want == math.inf
                continue
            assert path_cost(path) == pytest.approx(want, abs=1e-9)
            assert path[0] == tuple(a) and path[-1] == tuple(b)
            assert all(mask[p] for p in path)


class TestGoalnav:
    def test_dead_ahead(self):
        a = steer_to(Pose(0, 0, 0), (1.0, 0.0), LIM, 2.0)
        assert a.v == pytest.approx(LIM.v_max) and a.w == pytest.approx(0.0)

    def test_behind(self):
        a = steer_to(Pose(0, 0, 0), (-1.0, 1e-9), LIM, 2.0)
        assert a.v == pytest.approx(0.0, abs=1e-9) and abs(a.w) == LIM.w_max

    def test_distance_non_increasing_once_aligned(self):
        g = OccupancyGrid(np.zeros((80, 80), dtype=int), 0.1)
        rng = np.random.default_rng(2)
        s = SimState(Pose(1.0, 1.0, math.pi), rng)
        nav = GoalNav(g, rng, LIM)
        nav.waypoints = np.array([[6.5, 6.5]])
        nav.index = 0
        goal = nav.waypoints[0]
        aligned = False
        last = math.inf
        cfg = SimConfig(n_beams=2, odom_noise_xy=0, odom_noise_phi=0)
        for _ in range(40):
            p = s.true_pose
            d = math.hypot(goal[0] - p.x, goal[1] - p.y)
            if d < 0.3:
                break
            err = abs(math.atan2(goal[1] - p.y, goal[0] - p.x) - p.phi)
            err = min(err, 2 * math.pi - err)
            if err < math.pi / 4:
                aligned = True
            if aligned:
                assert d <= last + 1e-9
                last = d
            s, _ = step(s, g, nav.act(p), cfg)
        assert aligned

    def test_reaches_goals(self):
        cells = np.zeros((60, 60), dtype=int)
        cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = 2
        cells[30, :40] = 2
        g = OccupancyGrid(cells, 0.1)
        rng = np.random.default_rng(3)
        nav = GoalNav(g, rng, LIM)
        s = SimState(Pose(1.0, 1.0, 0.0), rng)
        hits = 0
        for _ in range(300):
            s, obs = step(s, g, nav.act(s.true_pose), SimConfig(n_beams=2))
            hits += obs.collided
        assert nav.goals_reached >= 2
        assert hits <= 5


def random_input(rng, arch=PolicyArch()):
    lb = rng.random((arch.belief_size, arch.belief_size, 4)) * rng.uniform(0, 5)
    scan = scan_of(rng.uniform(0.1, 10.0, 60))
    return PolicyInput(lb, scan, rng.uniform(-0.5, 0.5), rng.uniform(-1.5, 1.5), bool(rng.integers(2)), float(rng.random()))


class TestLearned:
    def test_dimensions(self):
        arch = PolicyArch()
        assert arch.n_inputs == 7 * 7 * 4 + 12 + 4
        assert arch.n_params == 212 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2

    def test_zero_params(self):
        a = act_learned(np.zeros(PolicyArch().n_params), random_input(np.random.default_rng(0)))
        assert (a.v, a.w) == (0.0, 0.0)

    def test_bounds_fuzz(self):
        rng = np.random.default_rng(1)
        arch = PolicyArch(belief_size=14, pool=7, hidden=8)
        for _ in range(10_000):
            p = rng.normal(0, rng.uniform(0.1, 50), arch.n_params)
            a = act_learned(p, random_input(rng, arch), arch)
            assert abs(a.v) <= LIM.v_max and abs(a.w) <= LIM.w_max

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        p = rng.normal(size=PolicyArch().n_params)
        inp = random_input(rng)
        assert act_learned(p, inp) == act_learned(p, inp)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            act_learned(np.zeros(10), random_input(np.random.default_rng(0)))

    def test_features(self):
        arch = PolicyArch()
        lb = np.zeros((56, 56, 4))
        lb[0, 0, 1] = 1.0
        r = np.linspace(1, 10, 60)
        inp = PolicyInput(lb, scan_of(r), 0.25, -LIM.w_max, True, 0.5)
        f = policy_features(inp, arch, LIM)
        pooled = f[:196].reshape(7, 7, 4)
        # one unit of mass stays one unit after pooling
        assert pooled[0, 0, 1] == pytest.approx(1.0)
        assert pooled[..., 1].sum() == pytest.approx(1.0)
        np.testing.assert_allclose(f[196:208], [q.min() / 10 for q in np.array_split(r, 12)])
        np.testing.assert_allclose(f[208:], [0.5, -1.0, 1.0, 0.5])

    def test_steps_remaining_range(self):
        with pytest.raises(ValueError):
            PolicyInput(np.zeros((56, 56, 4)), scan_of(np.ones(60)), 0, 0, False, 1.5)

    def test_policy_file_round_trip(self, tmp_path):
        arch = PolicyArch(hidden=16)
        p = np.random.default_rng(3).normal(size=arch.n_params)
        save_policy(tmp_path / "p.apfn", p, arch)
        data = (tmp_path / "p.apfn").read_bytes()
        assert data.startswith(b"APFNPOLICY 1\narch ")
        q, arch2 = load_policy(tmp_path / "p.apfn")
        assert arch2 == arch
        np.testing.assert_array_equal(p, q)

    def test_policy_file_rejects_truncation(self, tmp_path):
        arch = PolicyArch(hidden=4)
        save_policy(tmp_path / "p.apfn", np.zeros(arch.n_params), arch)
        data = (tmp_path / "p.apfn").read_bytes()
        (tmp_path / "bad.apfn").write_bytes(data[:-8])
        with pytest.raises(ValueError):
            load_policy(tmp_path / "bad.apfn")


class TestReward:
    def test_examples(self):
        assert compute_reward(0.0, True, 0.1) == pytest.approx(-0.1)
        assert compute_reward(0.10, False, 0.1) == pytest.approx(-0.10)
        assert compute_reward(0.0, False, 0.1) == 0.0

    def test_negative_loss(self):
        with pytest.raises(ValueError):
            compute_reward(-1.0, False)

    @settings(max_examples=50)
    @given(a=st.floats(0, 100), b=st.floats(0, 100))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert compute_reward(hi, False) <= compute_reward(lo, False)
        assert compute_reward(lo, True) < compute_reward(lo, False)


class TestCEM:
    def test_toy_quadratic(self):
        cfg = TrainerConfig(population=16, elite_frac=0.25, generations=20, init_std=1.0, min_std=1e-3, seed=0)
        res = cem_optimize(lambda th: -(th[0] - 2.0) ** 2, 1, cfg)
        assert res.best_params[0] == pytest.approx(2.0, abs=0.05)
        assert res.mean[0] == pytest.approx(2.0, abs=0.05)

    def test_reevaluate_elites(self):
        # a noisy objective: one lucky draw must not keep its score once elites are rescored
        rng = np.random.default_rng(0)
        sizes = []

        def batch(cands):
            sizes.append(len(cands))
            return [-(c[0] - 2.0) ** 2 + rng.normal(0, 0.5) for c in cands]

        cfg = TrainerConfig(population=16, elite_frac=0.25, generations=5, init_std=1.0, seed=0, reevaluate_elites=True)
        res = cem_optimize(None, 1, cfg, evaluate_batch=batch)
        assert sizes == [16] * 6
        elite = [p.elite_return for p in res.curve]
        assert any(b < a for a, b in zip(elite, elite[1:]))
        sizes.clear()
        cem_optimize(None, 1, TrainerConfig(population=16, elite_frac=0.25, generations=5, init_std=1.0, seed=0), evaluate_batch=batch)
        assert sizes == [16] + [12] * 5

    def test_zero_generations(self):
        cfg = TrainerConfig(population=8, generations=0, init_std=1.0, seed=1)
        seen = []

        def f(th):
            seen.append(th.copy())
            return -float(th @ th)

        res = cem_optimize(f, 3, cfg)
        assert len(seen) == 8
        best = max(seen, key=lambda t: -float(t @ t))
        np.testing.assert_array_equal(res.best_params, best)
        assert len(res.curve) == 1

    def test_elite_mean_monotone(self):
        rng = np.random.default_rng(4)
        target = rng.normal(size=20)
        cfg = TrainerConfig(population=12, elite_frac=0.25, generations=15, init_std=0.5, seed=2)
        res = cem_optimize(lambda th: -float(np.abs(th - target).sum()), 20, cfg)
        elite = [p.elite_return for p in res.curve]
        assert all(b >= a for a, b in zip(elite, elite[1:]))

    def test_non_finite_discarded(self):
        cfg = TrainerConfig(population=8, generations=2, init_std=1.0, seed=3)
        res = cem_optimize(lambda th: float("nan") if th[0] > 1.0 else -th[0] ** 2, 1, cfg)
        assert res.discarded > 0
        assert math.isfinite(res.best_return)

    def test_reproducible(self):
        cfg = TrainerConfig(population=8, generations=3, seed=5)
        f = lambda th: -float(th @ th)  # noqa: E731
        a = cem_optimize(f, 4, cfg)
        b = cem_optimize(f, 4, cfg)
        np.testing.assert_array_equal(a.best_params, b.best_params)

    def test_config_checks(self):
        with pytest.raises(ValueError):
            TrainerConfig(population=4, elite_frac=0.25)
        with pytest.raises(ValueError):
            TrainerConfig(elite_frac=1.0)

    def test_curve_csv(self, tmp_path):
        res = cem_optimize(lambda th: -float(th[0] ** 2), 1, TrainerConfig(population=8, generations=2))
        write_curve_csv(tmp_path / "c.csv", res.curve)
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "generation,mean_return,elite_return,best_return"
        assert len(lines) == 4

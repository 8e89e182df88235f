"""Invariant and oracle suite runnable from the command line."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import belief, oracles, pfilter
from .episode import make_policy, run_episode
from .mapgen import generate_corpus
from .pfilter import ParticleSet
from .policies import NoPath, path_cost, plan_path
from .tasks import TaskSpec
from .worldmap import CellCode, OccupancyGrid, Pose, distance_transform, format_map, parse_map, raycast


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def check_raycast(n=200, seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        h, w = rng.integers(10, 40, size=2)
        grid = oracles.random_grid(rng, (h, w), p_occ=rng.uniform(0.02, 0.2))
        wm, hm = grid.extent
        pose = Pose(rng.uniform(0, wm), rng.uniform(0, hm), 0.0)
        angle = rng.uniform(-math.pi, math.pi)
        max_range = rng.uniform(0.5, 5.0)
        fast = raycast(grid, pose, angle, max_range)
        slow = oracles.raycast_fine_step(grid, pose, angle, max_range)
        worst = max(worst, abs(fast - slow) / grid.resolution)
    return CheckResult("raycast vs fine-step oracle", worst <= 1.0, f"max error {worst:.3f} cells over {n} rays")


def check_distance_transform(n=20, seed=1) -> CheckResult:
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(n):
        grid = oracles.random_grid(rng, (30, 30), p_occ=rng.uniform(0.01, 0.3))
        if not grid.occupied.any():
            continue
        if not np.array_equal(distance_transform(grid).values, oracles.distance_all_pairs(grid)):
            mismatches += 1
    return CheckResult("distance transform vs all-pairs oracle", mismatches == 0, f"{mismatches}/{n} grids differ")


def check_astar(n=100, seed=2) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        mask = rng.random((20, 20)) > 0.3
        free = np.argwhere(mask)
        a, b = free[rng.integers(len(free), size=2)]
        expect = oracles.dijkstra_cost(mask, a, b)
        try:
            got = path_cost(plan_path(mask, a, b))
        except NoPath:
            got = math.inf
        if not (got == expect or abs(got - expect) < 1e-9):
            bad += 1
    return CheckResult("A* vs Dijkstra oracle", bad == 0, f"{bad}/{n} cost mismatches")


def check_crops(n=20, seed=3) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        grid = oracles.random_grid(rng, (40, 40))
        pose = Pose(rng.uniform(0, 4), rng.uniform(0, 4), rng.uniform(-math.pi, math.pi))
        size = int(rng.choice([11, 21]))
        got = pfilter.extract_local_map(grid, pose, size)
        want = oracles.crop_inverse_map(grid.cells, grid, pose, size, CellCode.UNEXPLORED)
        bad += not np.array_equal(got, want)
        ps = ParticleSet.uniform(np.column_stack([rng.uniform(0, 4, 50), rng.uniform(0, 4, 50), rng.uniform(-3, 3, 50)]))
        bm = belief.project_particles(ps, grid)
        lb = belief.extract_local_belief(bm, grid, pose, size)
        raw = oracles.crop_inverse_map(bm, grid, pose, size, 0.0)
        c, s = math.cos(pose.phi), math.sin(pose.phi)
        want = raw.copy()
        want[..., 2] = raw[..., 2] * c - raw[..., 3] * s
        want[..., 3] = raw[..., 3] * c + raw[..., 2] * s
        bad += not np.array_equal(lb, want)
    return CheckResult("crops vs inverse-mapping oracle", bad == 0, f"{bad}/{2 * n} crops differ")


def check_map_roundtrip(n=50, seed=4) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        h, w = rng.integers(1, 20, size=2)
        grid = OccupancyGrid(rng.integers(0, 3, size=(h, w)), float(rng.choice([0.05, 0.1, 0.25])))
        text = format_map(grid)
        bad += format_map(parse_map(text)) != text
    return CheckResult("map file round trip", bad == 0, f"{bad}/{n} files differ")


def check_determinism(seed=5) -> CheckResult:
    grid = generate_corpus(seed, 1)[0]
    task = TaskSpec.make("tracking", T=5)
    a = run_episode(grid, task, make_policy("goalnav"), seed=seed).to_json()
    b = run_episode(grid, task, make_policy("goalnav"), seed=seed).to_json()
    return CheckResult("episode determinism", a == b, "identical" if a == b else "episodes differ")


def check_soft_resample(seed=6) -> CheckResult:
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(10))
    lw = np.log(w)
    region = np.arange(10) < 4
    est = []
    for _ in range(2000):
        idx, lc = pfilter.soft_resample_indices(lw, 0.5, rng)
        est.append(np.exp(lc)[region[idx]].sum() / 10)
    est = np.array(est)
    z = abs(est.mean() - w[region].sum()) / (est.std(ddof=1) / math.sqrt(len(est)))
    return CheckResult("soft-resampling unbiasedness", z < 4.0, f"z = {z:.2f}")


def check_tiny_world(seed=7) -> CheckResult:
    tv = oracles.tiny_world_tv(oracles.TinyWorld(seed=0), K=10_000, T=10, alpha=0.5, seed=seed)
    return CheckResult("particle vs exact Bayes filter", tv.max() < 0.05, f"max TV {tv.max():.4f}")


CHECKS = [
    check_raycast,
    check_distance_transform,
    check_astar,
    check_crops,
    check_map_roundtrip,
    check_soft_resample,
    check_tiny_world,
    check_determinism,
]


def run_all(checks=CHECKS) -> list[CheckResult]:
    out = []
    for fn in checks:
        t0 = time.perf_counter()
        try:
            res = fn()
        except Exception as e:  # report, don't abort the suite
            res = CheckResult(fn.__name__, False, f"{type(e).__name__}: {e}")
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out

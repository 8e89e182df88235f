"""Slow, obviously-correct reference implementations used to check the fast paths."""

from __future__ import annotations

import heapq
import math

import numpy as np

from .worldmap import OccupancyGrid, Pose, wrap_angle


def raycast_fine_step(grid: OccupancyGrid, origin: Pose, angle: float, max_range: float, step=None) -> float:
    """Sample the ray at fixed increments (default resolution/1000) and return
    the first sample that lands in an Occupied cell.

    Coarser steps can jump over corner clips shorter than the step.
    """
    step = grid.resolution / 1000.0 if step is None else step
    t = np.append(np.arange(0.0, max_range, step), max_range)
    x = origin.x + t * math.cos(angle)
    y = origin.y + t * math.sin(angle)
    r, c = grid.world_to_cell(x, y)
    inside = grid.in_bounds(r, c)
    stop = ~inside
    stop[inside] = grid.occupied[r[inside], c[inside]]
    first = np.argmax(stop)
    if not stop[first] or not inside[first]:
        return max_range
    return float(t[first])


def distance_all_pairs(grid: OccupancyGrid) -> np.ndarray:
    """Minimum center-to-center distance from every cell to every Occupied cell."""
    occ_r, occ_c = np.nonzero(grid.occupied)
    out = np.empty(grid.cells.shape)
    for r in range(grid.height):
        for c in range(grid.width):
            d2 = (occ_r - r) ** 2 + (occ_c - c) ** 2
            out[r, c] = math.sqrt(int(d2.min())) * grid.resolution
    return out


def dijkstra_cost(mask: np.ndarray, start, goal) -> float:
    """Uniform-cost search on the 8-connected graph with no corner cutting; inf if unreachable."""
    h, w = mask.shape
    dist = {tuple(start): 0.0}
    pq = [(0.0, tuple(start))]
    done = set()
    while pq:
        d, (r, c) = heapq.heappop(pq)
        if (r, c) in done:
            continue
        done.add((r, c))
        if (r, c) == tuple(goal):
            return d
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                nr, nc = r + dr, c + dc
                if not (0 <= nr < h and 0 <= nc < w and mask[nr, nc]):
                    continue
                if dr != 0 and dc != 0:
                    if not (mask[r, nc] and mask[nr, c]):
                        continue
                    step = math.sqrt(2.0)
                else:
                    step = 1.0
                nd = d + step
                if nd < dist.get((nr, nc), math.inf):
                    dist[(nr, nc)] = nd
                    heapq.heappush(pq, (nd, (nr, nc)))
    return math.inf


def crop_inverse_map(values: np.ndarray, grid: OccupancyGrid, pose: Pose, size: int, fill):
    """Per-cell loop: output cell (i, j) takes the grid cell containing
    pose + R(phi) * ((j - size//2) * res, (i - size//2) * res)."""
    res = grid.resolution
    center = size // 2
    out = np.empty((size, size) + values.shape[2:], dtype=values.dtype)
    ca, sa = math.cos(pose.phi), math.sin(pose.phi)
    for i in range(size):
        for j in range(size):
            u = (j - center) * res
            v = (i - center) * res
            x = pose.x + ca * u - sa * v
            y = pose.y + sa * u + ca * v
            r, c = grid.world_to_cell(x, y)
            r, c = int(r), int(c)
            if 0 <= r < grid.height and 0 <= c < grid.width:
                out[i, j] = values[r, c]
            else:
                out[i, j] = fill
    return out


def random_grid(rng: np.random.Generator, shape=(30, 30), p_occ=0.2, resolution=0.1) -> OccupancyGrid:
    cells = np.where(rng.random(shape) < p_occ, 2, 0)
    cells[rng.random(shape) < 0.05] = 1
    return OccupancyGrid(cells, resolution)


class TinyWorld:
    """Discrete 5x5 torus with 3 headings and a tabulated observation model.

    Every step each state moves one cell along its heading axis (heading 0:
    +col, 1: +row, 2: -col) and then turns to the next heading. The map is a
    bijection, so the exact Bayes filter is a permutation followed by a
    likelihood product.
    """

    def __init__(self, seed=0, size=5, n_headings=3, n_obs=3, concentration=1.0):
        self.size = size
        self.n_headings = n_headings
        self.n_states = size * size * n_headings
        rng = np.random.default_rng(seed)
        self.obs_table = rng.dirichlet(np.full(n_obs, concentration), size=self.n_states)
        r, c, h = np.unravel_index(np.arange(self.n_states), (size, size, n_headings))
        dr = np.array([0, 1, 0])[h % 3]
        dc = np.array([1, 0, -1])[h % 3]
        self.next_state = np.ravel_multi_index(((r + dr) % size, (c + dc) % size, (h + 1) % n_headings), (size, size, n_headings))

    def poses(self, states):
        r, c, h = np.unravel_index(states, (self.size, self.size, self.n_headings))
        return np.column_stack([c + 0.5, r + 0.5, wrap_angle(h * (2 * math.pi / self.n_headings))])

    def states(self, poses):
        c = np.floor(poses[:, 0]).astype(int)
        r = np.floor(poses[:, 1]).astype(int)
        h = np.round(np.mod(poses[:, 2], 2 * math.pi) / (2 * math.pi / self.n_headings)).astype(int) % self.n_headings
        return np.ravel_multi_index((r, c, h), (self.size, self.size, self.n_headings))

    def bayes_step(self, belief, z):
        moved = np.zeros_like(belief)
        moved[self.next_state] = belief
        post = moved * self.obs_table[:, z]
        return post / post.sum()

    def histogram(self, states, weights):
        return np.bincount(states, weights=weights, minlength=self.n_states)

    def simulate(self, T, rng):
        """Sample a true state trajectory and its observations."""
        s = int(rng.integers(self.n_states))
        zs = []
        for _ in range(T):
            s = int(self.next_state[s])
            zs.append(int(rng.choice(self.obs_table.shape[1], p=self.obs_table[s])))
        return zs


def tiny_world_tv(world: TinyWorld, K: int, T: int, alpha: float, seed: int, method="systematic"):
    """Run the package's reweight/soft-resample steps on the tiny world and
    return the total-variation distance to the exact posterior at every step."""
    from .pfilter import ParticleSet, reweight, soft_resample

    rng = np.random.default_rng(seed)
    zs = world.simulate(T, rng)
    # stratified prior (state counts differ by at most one), shuffled so that
    # systematic draws do not alias with a periodic particle order
    ps = ParticleSet.uniform(world.poses(rng.permutation(np.arange(K) % world.n_states)))
    belief = np.full(world.n_states, 1.0 / world.n_states)
    tv = []
    for z in zs:
        belief = world.bayes_step(belief, z)
        st = world.next_state[world.states(ps.poses)]
        ps = ParticleSet(world.poses(st), ps.log_weights, True)
        ps = reweight(ps, np.log(world.obs_table[st, z]))
        approx = world.histogram(world.states(ps.poses), ps.weights)
        tv.append(0.5 * np.abs(approx - belief).sum())
        ps = soft_resample(ps, alpha, rng, method)
    return np.array(tv)

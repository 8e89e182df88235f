"""Motion policies: Turn, Avoid, Goalnav, the learned policy, and the reward."""

from __future__ import annotations

import heapq
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .simulator import Action, LidarScan
from .worldmap import MapError, OccupancyGrid, Pose, wrap_angle

SQRT2 = math.sqrt(2.0)


class NoPath(MapError):
    pass


@dataclass(frozen=True)
class ControlLimits:
    v_max: float = 0.5
    w_max: float = math.pi / 2


# ---------------------------------------------------------------------------
# heuristic baselines


def act_turn(limits: ControlLimits = ControlLimits()) -> Action:
    return Action(0.0, limits.w_max)


def quarter_minima(scan: LidarScan) -> np.ndarray:
    """Minimum range in each of four angular quarters, right to left."""
    return np.array([q.min() for q in np.array_split(np.asarray(scan.ranges), 4)])


def act_avoid(scan: LidarScan, limits: ControlLimits = ControlLimits(), threshold: float = 0.5) -> Action:
    """Drive forward until something is close, then back up or turn away.

    Beams are ordered from the right edge of the field of view (negative
    angles) to the left edge, so quarter 0 is the rightmost.
    """
    mins = quarter_minima(scan)
    if mins.min() > threshold:
        return Action(limits.v_max, 0.0)
    closest = int(np.argmin(mins))
    if closest in (1, 2):
        return Action(-limits.v_max / 2.0, 0.0)
    if closest == 3:
        return Action(0.0, -limits.w_max)
    return Action(0.0, limits.w_max)


# ---------------------------------------------------------------------------
# grid path planning


def octile(a, b) -> float:
    dr = abs(a[0] - b[0])
    dc = abs(a[1] - b[1])
    return (SQRT2 - 1.0) * min(dr, dc) + max(dr, dc)


_MOVES = [(-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0), (-1, -1, SQRT2), (-1, 1, SQRT2), (1, -1, SQRT2), (1, 1, SQRT2)]


def grid_neighbors(mask: np.ndarray, cell):
    """8-connected moves over ``mask``; diagonals may not cut blocked corners."""
    h, w = mask.shape
    r, c = cell
    for dr, dc, cost in _MOVES:
        nr, nc = r + dr, c + dc
        if not (0 <= nr < h and 0 <= nc < w) or not mask[nr, nc]:
            continue
        if dr and dc and not (mask[r, nc] and mask[nr, c]):
            continue
        yield (nr, nc), cost


def plan_path(grid_or_mask, start, goal, robot_radius=None) -> list[tuple[int, int]]:
    """Shortest 8-connected path between traversable cells (A*, octile heuristic).

    ``start`` and ``goal`` are (row, col) cells. Accepts an OccupancyGrid
    (its traversability mask is used) or a boolean mask directly.
    """
    if isinstance(grid_or_mask, OccupancyGrid):
        mask = grid_or_mask.traversable() if robot_radius is None else grid_or_mask.traversable(robot_radius)
    else:
        mask = np.asarray(grid_or_mask, dtype=bool)
    start = (int(start[0]), int(start[1]))
    goal = (int(goal[0]), int(goal[1]))
    for name, cell in (("start", start), ("goal", goal)):
        h, w = mask.shape
        if not (0 <= cell[0] < h and 0 <= cell[1] < w) or not mask[cell]:
            raise NoPath(f"no path: {name} cell {cell} is not traversable")
    if start == goal:
        return [start]

    g = {start: 0.0}
    parent = {start: None}
    closed = set()
    tie = 0
    frontier = [(octile(start, goal), tie, start)]
    while frontier:
        _, _, cur = heapq.heappop(frontier)
        if cur in closed:
            continue
        if cur == goal:
            path = [cur]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1]
        closed.add(cur)
        gc = g[cur]
        for nxt, cost in grid_neighbors(mask, cur):
            ng = gc + cost
            if ng < g.get(nxt, math.inf):
                g[nxt] = ng
                parent[nxt] = cur
                tie += 1
                heapq.heappush(frontier, (ng + octile(nxt, goal), tie, nxt))
    raise NoPath(f"no path from {start} to {goal}")


def path_cost(path) -> float:
    total = 0.0
    for a, b in zip(path, path[1:]):
        total += SQRT2 if (a[0] != b[0] and a[1] != b[1]) else 1.0
    return total


# ---------------------------------------------------------------------------
# goal navigation with ground-truth pose


def steer_to(pose: Pose, target, limits: ControlLimits, gain: float) -> Action:
    bearing = math.atan2(target[1] - pose.y, target[0] - pose.x)
    err = wrap_angle(bearing - pose.phi)
    w = float(np.clip(gain * err, -limits.w_max, limits.w_max))
    v = limits.v_max * max(0.0, math.cos(err))
    return Action(v, w)


class GoalNav:
    """Follows A* paths to random traversable goals using the true pose."""

    def __init__(
        self,
        grid: OccupancyGrid,
        rng: np.random.Generator,
        limits: ControlLimits = ControlLimits(),
        robot_radius: float = 0.18,
        tolerance: float = 0.2,
        lookahead: float = 0.4,
        gain: float = 2.0,
    ):
        self.grid = grid
        self.rng = rng
        self.limits = limits
        self.mask = grid.traversable(robot_radius)
        self.tolerance = tolerance
        self.lookahead = lookahead
        self.gain = gain
        self.waypoints = None
        self.index = 0
        self.goals_reached = 0

    def _nearest_traversable(self, pose: Pose):
        r, c = self.grid.world_to_cell(pose.x, pose.y)
        r, c = int(r), int(c)
        if 0 <= r < self.mask.shape[0] and 0 <= c < self.mask.shape[1] and self.mask[r, c]:
            return r, c
        rows, cols = np.nonzero(self.mask)
        i = int(np.argmin((rows - r) ** 2 + (cols - c) ** 2))
        return int(rows[i]), int(cols[i])

    def new_goal(self, pose: Pose, attempts: int = 20):
        rows, cols = np.nonzero(self.mask)
        start = self._nearest_traversable(pose)
        for _ in range(attempts):
            i = int(self.rng.integers(rows.size))
            goal = (int(rows[i]), int(cols[i]))
            try:
                path = plan_path(self.mask, start, goal)
            except NoPath:
                continue
            cx, cy = self.grid.cell_center(np.array([p[0] for p in path]), np.array([p[1] for p in path]))
            self.waypoints = np.column_stack([cx, cy])
            self.index = 0
            return goal
        raise NoPath("no reachable goal found")

    def act(self, pose: Pose) -> Action:
        if self.waypoints is None:
            self.new_goal(pose)
        pts = self.waypoints
        while self.index < len(pts) and math.hypot(pts[self.index, 0] - pose.x, pts[self.index, 1] - pose.y) < self.tolerance:
            self.index += 1
        if self.index >= len(pts):
            self.goals_reached += 1
            self.new_goal(pose)
            return self.act(pose)
        j = self.index
        while j + 1 < len(pts) and math.hypot(pts[j, 0] - pose.x, pts[j, 1] - pose.y) < self.lookahead:
            j += 1
        return steer_to(pose, pts[j], self.limits, self.gain)


# ---------------------------------------------------------------------------
# learned policy


@dataclass(frozen=True)
class PolicyArch:
    belief_size: int = 56
    pool: int = 7
    n_sectors: int = 12
    hidden: int = 64
    n_state: int = 4

    @property
    def n_inputs(self) -> int:
        return self.pool * self.pool * 4 + self.n_sectors + self.n_state

    @property
    def shapes(self):
        h = self.hidden
        return [(self.n_inputs, h), (h,), (h, h), (h,), (h, 2), (2,)]

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes)


@dataclass(frozen=True)
class PolicyInput:
    local_belief: np.ndarray
    scan: LidarScan
    v_prev: float
    w_prev: float
    collided: bool
    steps_remaining: float

    def __post_init__(self):
        if not 0.0 <= self.steps_remaining <= 1.0:
            raise ValueError("steps_remaining must be normalized to [0, 1]")


def policy_features(inp: PolicyInput, arch: PolicyArch, limits: ControlLimits) -> np.ndarray:
    lb = np.asarray(inp.local_belief, dtype=float)
    s = arch.belief_size
    if lb.shape != (s, s, 4):
        raise ValueError(f"local belief must be {s}x{s}x4, got {lb.shape}")
    b = s // arch.pool
    pooled = lb[: b * arch.pool, : b * arch.pool].reshape(arch.pool, b, arch.pool, b, 4).mean(axis=(1, 3))
    # mass and heading channels are sparse; report them per pooling block instead of per cell
    pooled[..., 1:] *= b * b
    ranges = np.asarray(inp.scan.ranges, dtype=float) / inp.scan.max_range
    sectors = np.array([q.min() for q in np.array_split(ranges, arch.n_sectors)])
    state = np.array(
        [inp.v_prev / limits.v_max, inp.w_prev / limits.w_max, float(inp.collided), inp.steps_remaining]
    )
    return np.concatenate([pooled.ravel(), sectors, state])


def unpack_params(params: np.ndarray, arch: PolicyArch):
    params = np.asarray(params, dtype=float)
    if params.shape != (arch.n_params,):
        raise ValueError(f"expected {arch.n_params} parameters, got {params.shape}")
    out = []
    i = 0
    for shape in arch.shapes:
        n = int(np.prod(shape))
        out.append(params[i : i + n].reshape(shape))
        i += n
    return out


def mlp_forward(params, x, arch: PolicyArch) -> np.ndarray:
    w1, b1, w2, b2, w3, b3 = unpack_params(params, arch)
    h = np.tanh(x @ w1 + b1)
    h = np.tanh(h @ w2 + b2)
    return np.tanh(h @ w3 + b3)


def act_learned(params, inp: PolicyInput, arch: PolicyArch = PolicyArch(), limits: ControlLimits = ControlLimits()) -> Action:
    out = mlp_forward(params, policy_features(inp, arch, limits), arch)
    return Action(float(out[0] * limits.v_max), float(out[1] * limits.w_max))


def compute_reward(loss_t: float, collided: bool, lambda_c: float = 0.1) -> float:
    if loss_t < 0:
        raise ValueError("loss must be non-negative")
    return -loss_t - lambda_c * float(bool(collided))


# ---------------------------------------------------------------------------
# policy file


POLICY_MAGIC = "APFNPOLICY 1"


def save_policy(path, params: np.ndarray, arch: PolicyArch) -> None:
    params = np.asarray(params, dtype="<f8")
    if params.shape != (arch.n_params,):
        raise ValueError("parameter vector does not match architecture")
    arch_line = "arch " + " ".join(f"{k}={v}" for k, v in asdict(arch).items())
    header = f"{POLICY_MAGIC}\n{arch_line}\nparams {arch.n_params}\n".encode()
    Path(path).write_bytes(header + params.tobytes())


def load_policy(path):
    """Returns (params, arch); validates the header and parameter count."""
    data = Path(path).read_bytes()
    lines = data.split(b"\n", 3)
    if len(lines) < 4 or lines[0].decode() != POLICY_MAGIC:
        raise ValueError("not a policy file")
    arch_toks = lines[1].decode().split()
    if arch_toks[0] != "arch":
        raise ValueError("missing architecture line")
    kw = {}
    for tok in arch_toks[1:]:
        k, v = tok.split("=")
        kw[k] = int(v)
    arch = PolicyArch(**kw)
    ptoks = lines[2].decode().split()
    if ptoks[0] != "params" or int(ptoks[1]) != arch.n_params:
        raise ValueError("parameter count does not match architecture")
    blob = lines[3]
    if len(blob) != 8 * arch.n_params:
        raise ValueError(f"expected {8 * arch.n_params} parameter bytes, found {len(blob)}")
    params = np.array(struct.unpack(f"<{arch.n_params}d", blob))
    return params, arch

"""Differential-drive robot with a planar LiDAR and noisy odometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .worldmap import (
    DEFAULT_ROBOT_RADIUS,
    CellCode,
    MapError,
    OccupancyGrid,
    Pose,
    disc_collides,
    raycast_local,
    wrap_angle,
)

CONTROL_HZ = 1.7


@dataclass(frozen=True)
class SimConfig:
    v_max: float = 0.5
    w_max: float = math.pi / 2
    dt: float = 1.0 / CONTROL_HZ
    robot_radius: float = DEFAULT_ROBOT_RADIUS
    n_beams: int = 60
    fov: float = math.radians(240.0)
    max_range: float = 10.0
    odom_noise_xy: float = 0.01
    odom_noise_phi: float = math.radians(5.0)


@dataclass(frozen=True)
class Action:
    v: float
    w: float

    def clamp(self, v_max, w_max) -> "Action":
        return Action(float(np.clip(self.v, -v_max, v_max)), float(np.clip(self.w, -w_max, w_max)))


@dataclass(frozen=True)
class LidarScan:
    ranges: np.ndarray
    fov: float
    max_range: float

    @property
    def n_beams(self) -> int:
        return len(self.ranges)

    @property
    def beam_angles(self) -> np.ndarray:
        """Beam directions relative to the robot heading."""
        return beam_angles(self.n_beams, self.fov)


@dataclass(frozen=True)
class OdomDelta:
    """Motion since the previous step, expressed in the previous robot frame."""

    dx: float
    dy: float
    dphi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dphi])


@dataclass(frozen=True)
class Observation:
    scan: LidarScan
    odom: OdomDelta
    collided: bool


@dataclass
class SimState:
    true_pose: Pose
    rng: np.random.Generator
    step_index: int = 0
    last_action: Action = field(default_factory=lambda: Action(0.0, 0.0))


def beam_angles(n_beams: int, fov: float) -> np.ndarray:
    if n_beams < 2:
        raise ValueError("need at least 2 beams")
    i = np.arange(n_beams)
    return fov * (i / (n_beams - 1) - 0.5)


def compose(pose: Pose, delta) -> Pose:
    """Apply a body-frame motion (dx, dy, dphi) to a pose."""
    dx, dy, dphi = delta
    c, s = math.cos(pose.phi), math.sin(pose.phi)
    return Pose(pose.x + c * dx - s * dy, pose.y + s * dx + c * dy, pose.phi + dphi)


def relative_motion(a: Pose, b: Pose) -> np.ndarray:
    """Body-frame motion taking pose ``a`` to pose ``b``."""
    c, s = math.cos(a.phi), math.sin(a.phi)
    ex, ey = b.x - a.x, b.y - a.y
    return np.array([c * ex + s * ey, -s * ex + c * ey, wrap_angle(b.phi - a.phi)])


def integrate_unicycle(pose: Pose, v: float, w: float, t: float, eps: float = 1e-9):
    """Exact arc integration of constant (v, w) for duration t; returns (x, y, phi_unwrapped)."""
    phi = pose.phi
    if abs(w) > eps:
        x = pose.x + (v / w) * (math.sin(phi + w * t) - math.sin(phi))
        y = pose.y - (v / w) * (math.cos(phi + w * t) - math.cos(phi))
    else:
        x = pose.x + v * t * math.cos(phi)
        y = pose.y + v * t * math.sin(phi)
    return x, y, phi + w * t


def _motion_until_contact(grid, pose, v, w, dt, radius, step_len=0.01, bisect_iters=30):
    """Largest fraction s in [0, 1] of the step that keeps the disc collision-free."""
    if v == 0.0:
        return 1.0, False
    n = max(2, int(math.ceil(abs(v) * dt / step_len)) + 1)
    prev = 0.0
    for s in np.linspace(0.0, 1.0, n)[1:]:
        x, y, _ = integrate_unicycle(pose, v, w, s * dt)
        if disc_collides(grid, x, y, radius):
            lo, hi = prev, float(s)
            for _ in range(bisect_iters):
                mid = 0.5 * (lo + hi)
                mx, my, _ = integrate_unicycle(pose, v, w, mid * dt)
                if disc_collides(grid, mx, my, radius):
                    hi = mid
                else:
                    lo = mid
            return lo, True
        prev = float(s)
    return 1.0, False


def sense(state_or_pose, grid: OccupancyGrid, n_beams: int, fov: float, max_range: float) -> LidarScan:
    """Noise-free LiDAR scan; beam i looks along phi + fov*(i/(n-1) - 1/2)."""
    pose = state_or_pose.true_pose if isinstance(state_or_pose, SimState) else state_or_pose
    rel = beam_angles(n_beams, fov)
    lx, ly = grid.to_local(pose.x, pose.y)
    ranges = raycast_local(grid, lx, ly, wrap_angle(pose.phi - grid.origin.phi + rel), max_range)
    return LidarScan(ranges=ranges, fov=float(fov), max_range=float(max_range))


def step(state: SimState, grid: OccupancyGrid, action: Action, cfg: SimConfig = SimConfig(), dt=None):
    """Advance the robot by one control period.

    Translation stops at the first contact of the robot disc with an Occupied
    cell; the commanded rotation is still carried out in place.
    Odometry reports the motion actually executed, plus Gaussian noise drawn
    from ``state.rng``.

    Returns
    -------
    (SimState, Observation)
    """
    dt = cfg.dt if dt is None else dt
    if not dt > 0:
        raise ValueError("dt must be positive")
    a = action.clamp(cfg.v_max, cfg.w_max)
    pose = state.true_pose
    s, collided = _motion_until_contact(grid, pose, a.v, a.w, dt, cfg.robot_radius)
    x, y, phi = integrate_unicycle(pose, a.v, a.w, s * dt)
    if collided:
        # translation ends at contact; a disc can still finish turning in place
        phi = pose.phi + a.w * dt
    new_pose = Pose(x, y, phi)

    true_delta = relative_motion(pose, new_pose)
    noise = state.rng.normal(0.0, 1.0, 3) * (cfg.odom_noise_xy, cfg.odom_noise_xy, cfg.odom_noise_phi)
    measured = true_delta + noise
    odom = OdomDelta(float(measured[0]), float(measured[1]), float(measured[2]))

    new_state = replace(state, true_pose=new_pose, step_index=state.step_index + 1, last_action=a)
    scan = sense(new_pose, grid, cfg.n_beams, cfg.fov, cfg.max_range)
    return new_state, Observation(scan=scan, odom=odom, collided=collided)


def scan_to_local_occupancy(scan: LidarScan, size: int, resolution: float) -> np.ndarray:
    """Egocentric occupancy image of a scan.

    The robot sits at the center cell looking along +x (columns); rows grow
    with +y. Cells swept by a beam are Free, the endpoint cell of a beam that
    returned before ``max_range`` is Occupied, everything else Unexplored.
    """
    if size % 2 != 1:
        raise ValueError("size must be odd")
    c = size // 2
    img = np.full((size, size), CellCode.UNEXPLORED, dtype=np.int8)
    ang = scan.beam_angles
    ranges = np.asarray(scan.ranges, dtype=float)
    half = (c + 0.5) * resolution
    # sample each beam finely up to its endpoint (or the image border)
    reach = np.minimum(ranges, half * math.sqrt(2.0))
    ds = resolution / 4.0
    n = int(math.ceil(reach.max() / ds)) + 1 if reach.size else 1
    t = np.arange(n) * ds
    tt = np.minimum(t[None, :], reach[:, None])
    px = tt * np.cos(ang)[:, None]
    py = tt * np.sin(ang)[:, None]
    cols = np.floor(px / resolution + 0.5).astype(np.int64) + c
    rows = np.floor(py / resolution + 0.5).astype(np.int64) + c
    before_end = t[None, :] < ranges[:, None]
    ok = before_end & (rows >= 0) & (rows < size) & (cols >= 0) & (cols < size)
    img[rows[ok], cols[ok]] = CellCode.FREE

    hit = ranges < scan.max_range
    ex = ranges[hit] * np.cos(ang[hit])
    ey = ranges[hit] * np.sin(ang[hit])
    ec = np.floor(ex / resolution + 0.5).astype(np.int64) + c
    er = np.floor(ey / resolution + 0.5).astype(np.int64) + c
    ok = (er >= 0) & (er < size) & (ec >= 0) & (ec < size)
    img[er[ok], ec[ok]] = CellCode.OCCUPIED
    return img


def initial_state(pose: Pose, grid: OccupancyGrid, rng: np.random.Generator, cfg: SimConfig = SimConfig()) -> SimState:
    if not grid.contains(pose.x, pose.y):
        raise MapError("initial pose outside the grid")
    if disc_collides(grid, pose.x, pose.y, cfg.robot_radius):
        raise MapError("initial pose overlaps an obstacle")
    return SimState(true_pose=pose, rng=rng)

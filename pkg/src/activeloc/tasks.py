"""Localization tasks and their initial beliefs."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .pfilter import ParticleSet
from .worldmap import DEFAULT_ROBOT_RADIUS, MapError, OccupancyGrid, Pose, sample_traversable_poses, wrap_angle


class TaskKind(str, Enum):
    TRACKING = "tracking"
    SEMIGLOBAL = "semiglobal"
    GLOBAL = "global"


DEFAULT_PARTICLES = {TaskKind.TRACKING: 300, TaskKind.SEMIGLOBAL: 500, TaskKind.GLOBAL: 3000}


@dataclass(frozen=True)
class TaskSpec:
    kind: TaskKind
    n_particles: int
    T: int = 25
    init_std_xy: float = 0.3
    init_std_phi: float = math.pi / 6
    box_size: float = 3.3
    robot_radius: float = DEFAULT_ROBOT_RADIUS

    @classmethod
    def make(cls, kind, T=25, n_particles=None, **kw) -> "TaskSpec":
        kind = TaskKind(kind)
        n = DEFAULT_PARTICLES[kind] if n_particles is None else n_particles
        return cls(kind=kind, n_particles=n, T=T, **kw)

    def with_(self, **kw) -> "TaskSpec":
        return replace(self, **kw)


def _gaussian_poses(center, n, std_xy, std_phi, rng):
    z = rng.standard_normal((n, 3))
    out = np.empty((n, 3))
    out[:, 0] = center[0] + std_xy * z[:, 0]
    out[:, 1] = center[1] + std_xy * z[:, 1]
    out[:, 2] = wrap_angle(center[2] + std_phi * z[:, 2])
    return out


def noisy_guess(task: TaskSpec, true_pose: Pose, rng) -> np.ndarray:
    return _gaussian_poses(true_pose.as_array(), 1, task.init_std_xy, task.init_std_phi, rng)[0]


def init_belief(task: TaskSpec, grid: OccupancyGrid, true_pose: Pose, rng: np.random.Generator) -> ParticleSet:
    """Initial particle set for the task; all weights 1/K.

    Tracking: Gaussian around a guess that is itself drawn from the same
    Gaussian around the true pose. SemiGlobal: uniform over the traversable
    part of a square box around such a guess, uniform heading. Global:
    uniform over the whole traversable area.
    """
    n = task.n_particles
    if task.kind is TaskKind.TRACKING:
        guess = noisy_guess(task, true_pose, rng)
        poses = _gaussian_poses(guess, n, task.init_std_xy, task.init_std_phi, rng)
    elif task.kind is TaskKind.SEMIGLOBAL:
        guess = noisy_guess(task, true_pose, rng)
        poses = _box_poses(grid, guess, task.box_size, n, rng, task.robot_radius)
    elif task.kind is TaskKind.GLOBAL:
        poses = sample_traversable_poses(grid, rng, n, task.robot_radius)
    else:  # pragma: no cover
        raise ValueError(task.kind)
    return ParticleSet.uniform(poses)


def _box_poses(grid, center, size, n, rng, robot_radius):
    mask = grid.traversable(robot_radius)
    half = size / 2.0
    # traversable cells with any overlap with the box, used to reject hopeless boxes early
    cx, cy = grid.cell_center(*np.nonzero(mask))
    near = (np.abs(cx - center[0]) <= half + grid.resolution) & (np.abs(cy - center[1]) <= half + grid.resolution)
    if not near.any():
        raise MapError("initial box contains no traversable area")
    out = np.empty((0, 3))
    for _ in range(1000):
        m = max(2 * (n - len(out)), 64)
        u = rng.random((m, 3))
        x = center[0] - half + size * u[:, 0]
        y = center[1] - half + size * u[:, 1]
        r, c = grid.world_to_cell(x, y)
        ok = grid.in_bounds(r, c)
        ok[ok] = mask[r[ok], c[ok]]
        phi = wrap_angle(-math.pi + 2 * math.pi * u[:, 2])
        out = np.vstack([out, np.column_stack([x, y, phi])[ok]])
        if len(out) >= n:
            return out[:n]
    raise MapError("initial box contains no traversable area")

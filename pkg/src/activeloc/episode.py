"""Episode execution: policy -> simulator -> filter, recording pose errors and rewards."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import belief, pfilter, policies
from .pfilter import BeliefCollapsed, FilterConfig, ParticleSet
from .policies import ControlLimits, PolicyArch, PolicyInput
from .simulator import Action, SimConfig, initial_state, sense, step
from .tasks import TaskSpec, init_belief
from .worldmap import OccupancyGrid, Pose, sample_traversable_pose, wrap_angle


class EpisodeError(RuntimeError):
    def __init__(self, message, step_index):
        super().__init__(f"{message} (step {step_index})")
        self.step_index = step_index


@dataclass
class StepContext:
    grid: OccupancyGrid
    scan: object
    true_pose: Pose
    particles: ParticleSet
    last_action: Action
    collided: bool
    steps_remaining: float


class Policy:
    name = "policy"
    needs_belief = False

    def reset(self, grid: OccupancyGrid, rng: np.random.Generator, limits: ControlLimits) -> None:
        self.limits = limits

    def act(self, ctx: StepContext) -> Action:
        raise NotImplementedError


class IdlePolicy(Policy):
    name = "idle"

    def act(self, ctx):
        return Action(0.0, 0.0)


class TurnPolicy(Policy):
    name = "turn"

    def act(self, ctx):
        return policies.act_turn(self.limits)


class AvoidPolicy(Policy):
    name = "avoid"

    def __init__(self, threshold: float = 0.5):
        self.threshold = threshold

    def act(self, ctx):
        return policies.act_avoid(ctx.scan, self.limits, self.threshold)


class GoalnavPolicy(Policy):
    name = "goalnav"

    def __init__(self, robot_radius=0.18, tolerance=0.2, lookahead=0.4, gain=2.0):
        self.kw = dict(robot_radius=robot_radius, tolerance=tolerance, lookahead=lookahead, gain=gain)
        self.nav = None

    def reset(self, grid, rng, limits):
        super().reset(grid, rng, limits)
        self.nav = policies.GoalNav(grid, rng, limits, **self.kw)

    def act(self, ctx):
        return self.nav.act(ctx.true_pose)


class LearnedPolicy(Policy):
    name = "learned"
    needs_belief = True

    def __init__(self, params, arch: PolicyArch = PolicyArch()):
        self.params = np.asarray(params, dtype=float)
        self.arch = arch
        if self.params.shape != (arch.n_params,):
            raise ValueError(f"expected {arch.n_params} parameters, got {self.params.shape}")

    def policy_input(self, ctx: StepContext) -> PolicyInput:
        bm = belief.project_particles(ctx.particles, ctx.grid)
        attend = belief.extract_modes(ctx.particles, 1)[0]
        lb = belief.extract_local_belief(bm, ctx.grid, attend, self.arch.belief_size)
        return PolicyInput(lb, ctx.scan, ctx.last_action.v, ctx.last_action.w, ctx.collided, ctx.steps_remaining)

    def act(self, ctx):
        return policies.act_learned(self.params, self.policy_input(ctx), self.arch, self.limits)


def make_policy(name: str, params=None, arch: PolicyArch = PolicyArch(), **kw) -> Policy:
    name = name.lower()
    if name == "turn":
        return TurnPolicy()
    if name == "avoid":
        return AvoidPolicy(kw.get("avoid_threshold", 0.5))
    if name == "goalnav":
        return GoalnavPolicy(
            kw.get("robot_radius", 0.18), kw.get("goal_tolerance", 0.2), kw.get("goal_lookahead", 0.4), kw.get("goal_gain", 2.0)
        )
    if name == "idle":
        return IdlePolicy()
    if name == "learned":
        if params is None:
            raise ValueError("learned policy needs parameters")
        return LearnedPolicy(params, arch)
    raise ValueError(f"unknown policy {name!r}")


@dataclass
class EpisodeResult:
    true_poses: np.ndarray
    est_poses: np.ndarray
    losses: np.ndarray
    rewards: np.ndarray
    collided: np.ndarray
    seed: int
    map_id: str
    policy_id: str
    task: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.losses)

    @property
    def final_position_error(self) -> float:
        d = self.est_poses[-1, :2] - self.true_poses[-1, :2]
        return float(math.hypot(d[0], d[1]))

    @property
    def final_orientation_error(self) -> float:
        return abs(wrap_angle(self.est_poses[-1, 2] - self.true_poses[-1, 2]))

    @property
    def position_errors(self) -> np.ndarray:
        return np.hypot(*(self.est_poses[:, :2] - self.true_poses[:, :2]).T)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy_id,
            "task": self.task,
            "map_id": self.map_id,
            "seed": self.seed,
            "true_poses": self.true_poses.tolist(),
            "est_poses": self.est_poses.tolist(),
            "losses": self.losses.tolist(),
            "rewards": self.rewards.tolist(),
            "collided": [bool(c) for c in self.collided],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "EpisodeResult":
        return cls(
            true_poses=np.array(d["true_poses"], dtype=float).reshape(-1, 3),
            est_poses=np.array(d["est_poses"], dtype=float).reshape(-1, 3),
            losses=np.array(d["losses"], dtype=float),
            rewards=np.array(d["rewards"], dtype=float),
            collided=np.array(d["collided"], dtype=bool),
            seed=d["seed"],
            map_id=d["map_id"],
            policy_id=d["policy"],
            task=d.get("task", ""),
        )


def episode_streams(seed: int):
    """Independent generators for start pose, simulator noise, filter and policy."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def run_episode(
    grid: OccupancyGrid,
    task: TaskSpec,
    policy: Policy,
    filter_cfg: FilterConfig = FilterConfig(),
    seed: int = 0,
    sim_cfg: SimConfig = SimConfig(),
    lambda_collision: float = 0.1,
    map_id: str = "",
    start_pose: Pose | None = None,
    on_step=None,
) -> EpisodeResult:
    """Run one localization episode of ``task.T`` steps.

    Each step the policy acts on the current scan and belief, the robot
    moves, and the filter predicts, weighs and soft-resamples. Everything is
    a function of (``seed``, arguments).
    """
    rng_start, rng_sim, rng_filter, rng_policy = episode_streams(seed)
    if start_pose is None:
        start_pose = sample_traversable_pose(grid, rng_start, task.robot_radius)
    state = initial_state(start_pose, grid, rng_sim, sim_cfg)
    limits = ControlLimits(sim_cfg.v_max, sim_cfg.w_max)
    policy.reset(grid, rng_policy, limits)
    dfield = grid.distance_field()
    model = pfilter.LikelihoodField(dfield, filter_cfg.sigma_lhood, filter_cfg.eps_floor)

    ps = init_belief(task, grid, start_pose, rng_filter)
    scan = sense(start_pose, grid, sim_cfg.n_beams, sim_cfg.fov, sim_cfg.max_range)
    collided = False
    T = task.T
    true_poses = np.empty((T, 3))
    est_poses = np.empty((T, 3))
    losses = np.empty(T)
    rewards = np.empty(T)
    hits = np.zeros(T, dtype=bool)
    for t in range(T):
        ctx = StepContext(grid, scan, state.true_pose, ps, state.last_action, collided, (T - t) / T)
        action = policy.act(ctx)
        state, obs = step(state, grid, action, sim_cfg)
        try:
            ps = pfilter.predict(ps, obs.odom, filter_cfg, rng_filter)
            ps = pfilter.reweight(ps, model.log_likelihood(ps.poses, obs.scan))
            ps = pfilter.soft_resample(ps, filter_cfg.alpha, rng_filter, filter_cfg.resample)
            est = pfilter.estimate_pose(ps)
        except (BeliefCollapsed, pfilter.OrientationUndefined) as e:
            raise EpisodeError(str(e), t) from e
        loss = pfilter.pose_loss(est, state.true_pose, filter_cfg.beta)
        scan, collided = obs.scan, obs.collided
        true_poses[t] = state.true_pose.as_array()
        est_poses[t] = est.as_array()
        losses[t] = loss
        rewards[t] = policies.compute_reward(loss, collided, lambda_collision)
        hits[t] = collided
        if on_step is not None:
            on_step(t, state, ps, est)
    return EpisodeResult(true_poses, est_poses, losses, rewards, hits, seed, map_id, policy.name, task.kind.value)

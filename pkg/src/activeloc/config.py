"""Flat ``key = value`` experiment configuration with strict key checking."""

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .cem import TrainerConfig
from .mapgen import FloorplanConfig
from .pfilter import FilterConfig
from .policies import PolicyArch
from .simulator import SimConfig
from .tasks import TaskKind, TaskSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # corpus
    maps_seed: int = 1
    n_train_maps: int = 10
    n_test_maps: int = 3
    map_dir: str = ""
    map_width_min: float = 6.0
    map_width_max: float = 9.0
    map_height_min: float = 5.0
    map_height_max: float = 8.0
    map_resolution: float = 0.1
    # robot and sensors
    robot_radius: float = 0.18
    v_max: float = 0.5
    w_max: float = math.pi / 2
    control_hz: float = 1.7
    n_beams: int = 60
    fov_deg: float = 240.0
    max_range: float = 10.0
    odom_noise_xy: float = 0.01
    odom_noise_phi_deg: float = 5.0
    # filter
    alpha: float = 0.5
    beta: float = 0.36
    sigma_lhood: float = 0.3
    trans_noise_xy: float = 0.01
    trans_noise_phi_deg: float = 5.0
    eps_floor: float = 1e-9
    resample: str = "systematic"
    local_map_size: int = 56
    # belief and learned policy
    belief_size: int = 56
    pool: int = 7
    n_sectors: int = 12
    hidden: int = 64
    mode_bin_xy: float = 1.0
    mode_bin_phi_deg: float = 60.0
    # baselines and reward
    avoid_threshold: float = 0.5
    goal_tolerance: float = 0.2
    goal_lookahead: float = 0.4
    goal_gain: float = 2.0
    lambda_collision: float = 0.1
    # tasks and evaluation
    tracking_particles: int = 300
    semiglobal_particles: int = 500
    global_particles: int = 3000
    init_std_xy: float = 0.3
    init_std_phi_deg: float = 30.0
    box_size: float = 3.3
    episode_steps: int = 25
    policies: tuple = ("turn", "avoid", "goalnav")
    tasks: tuple = ("tracking",)
    splits: tuple = ("seen", "unseen")
    n_episodes: int = 50
    seed: int = 0
    workers: int = 1
    output_dir: str = "results"
    # training
    policy_file: str = ""
    train_task: str = "semiglobal"
    train_particles: int = 500
    train_steps: int = 50
    population: int = 16
    elite_frac: float = 0.25
    generations: int = 10
    episodes_per_eval: int = 4
    init_std: float = 0.1
    min_std: float = 0.01
    train_seed: int = 0
    train_fresh_seeds: bool = False

    # builders ----------------------------------------------------------

    def sim(self) -> SimConfig:
        return SimConfig(
            v_max=self.v_max,
            w_max=self.w_max,
            dt=1.0 / self.control_hz,
            robot_radius=self.robot_radius,
            n_beams=self.n_beams,
            fov=math.radians(self.fov_deg),
            max_range=self.max_range,
            odom_noise_xy=self.odom_noise_xy,
            odom_noise_phi=math.radians(self.odom_noise_phi_deg),
        )

    def filter(self) -> FilterConfig:
        return FilterConfig(
            alpha=self.alpha,
            beta=self.beta,
            sigma_lhood=self.sigma_lhood,
            trans_noise=(self.trans_noise_xy, math.radians(self.trans_noise_phi_deg)),
            local_map_size=self.local_map_size,
            eps_floor=self.eps_floor,
            resample=self.resample,
        )

    def arch(self) -> PolicyArch:
        return PolicyArch(belief_size=self.belief_size, pool=self.pool, n_sectors=self.n_sectors, hidden=self.hidden)

    def floorplan(self) -> FloorplanConfig:
        return FloorplanConfig(
            width_m=(self.map_width_min, self.map_width_max),
            height_m=(self.map_height_min, self.map_height_max),
            resolution=self.map_resolution,
            robot_radius=self.robot_radius,
        )

    def task(self, kind, T=None, n_particles=None) -> TaskSpec:
        kind = TaskKind(kind)
        default_n = {
            TaskKind.TRACKING: self.tracking_particles,
            TaskKind.SEMIGLOBAL: self.semiglobal_particles,
            TaskKind.GLOBAL: self.global_particles,
        }[kind]
        return TaskSpec(
            kind=kind,
            n_particles=default_n if n_particles is None else n_particles,
            T=self.episode_steps if T is None else T,
            init_std_xy=self.init_std_xy,
            init_std_phi=math.radians(self.init_std_phi_deg),
            box_size=self.box_size,
            robot_radius=self.robot_radius,
        )

    def train_task_spec(self) -> TaskSpec:
        return self.task(self.train_task, T=self.train_steps, n_particles=self.train_particles)

    def trainer(self) -> TrainerConfig:
        return TrainerConfig(
            population=self.population,
            elite_frac=self.elite_frac,
            generations=self.generations,
            episodes_per_eval=self.episodes_per_eval,
            init_std=self.init_std,
            min_std=self.min_std,
            seed=self.train_seed,
            reevaluate_elites=self.train_fresh_seeds,
        )

    def policy_kwargs(self) -> dict:
        return dict(
            robot_radius=self.robot_radius,
            avoid_threshold=self.avoid_threshold,
            goal_tolerance=self.goal_tolerance,
            goal_lookahead=self.goal_lookahead,
            goal_gain=self.goal_gain,
        )

    def with_(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def validate(self) -> "ExperimentConfig":
        try:
            self.sim()
            self.filter()
            self.trainer()
            for t in self.tasks + (self.train_task,):
                TaskKind(t)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        for s in self.splits:
            if s not in ("seen", "unseen"):
                raise ConfigError(f"unknown split {s!r}")
        for p in self.policies:
            if p not in ("turn", "avoid", "goalnav", "learned", "idle"):
                raise ConfigError(f"unknown policy {p!r}")
        if self.n_episodes < 1:
            raise ConfigError("n_episodes must be at least 1")
        return self


_BOOL = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def _coerce(name, default, raw: str):
    try:
        if isinstance(default, bool):
            return _BOOL[raw.lower()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(t.strip() for t in raw.split(",") if t.strip())
        return raw
    except (ValueError, KeyError):
        raise ConfigError(f"bad value for {name!r}: {raw!r}") from None


def parse_config(text: str) -> ExperimentConfig:
    defaults = {f.name: f.default for f in fields(ExperimentConfig)}
    values = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        values[key] = _coerce(key, defaults[key], val)
    return ExperimentConfig(**values).validate()


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: ExperimentConfig) -> str:
    out = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"

"""Policy training and the policy x task x split evaluation matrix."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .cem import CEMResult, cem_optimize, write_curve_csv
from .config import ExperimentConfig, format_config
from .episode import EpisodeError, EpisodeResult, make_policy, run_episode
from .mapgen import split_corpus
from .policies import load_policy, save_policy
from .worldmap import load_map, save_map

log = logging.getLogger(__name__)


def load_corpus(cfg: ExperimentConfig):
    """(seen, unseen) dicts of map id -> grid, generated from ``maps_seed`` or read from ``map_dir``."""
    if cfg.map_dir:
        d = Path(cfg.map_dir)
        seen = {p.stem: load_map(p) for p in sorted(d.glob("train_*.ogmap"))}
        unseen = {p.stem: load_map(p) for p in sorted(d.glob("test_*.ogmap"))}
        if not seen and not unseen:
            raise FileNotFoundError(f"no train_*/test_* maps in {d}")
        return seen, unseen
    return split_corpus(cfg.maps_seed, cfg.n_train_maps, cfg.n_test_maps, cfg.floorplan())


def write_corpus(seen, unseen, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for maps in (seen, unseen):
        for mid, grid in maps.items():
            p = directory / f"{mid}.ogmap"
            save_map(grid, p)
            out.append(p)
    return out


@dataclass(frozen=True)
class Job:
    policy: str
    task: str
    split: str
    map_id: str
    seed: int
    T: int | None = None
    n_particles: int | None = None


def _run_job(cfg: ExperimentConfig, job: Job, grid, params):
    policy = make_policy(job.policy, params=params, arch=cfg.arch(), **cfg.policy_kwargs())
    task = cfg.task(job.task, T=job.T, n_particles=job.n_particles)
    try:
        return run_episode(
            grid,
            task,
            policy,
            cfg.filter(),
            seed=job.seed,
            sim_cfg=cfg.sim(),
            lambda_collision=cfg.lambda_collision,
            map_id=job.map_id,
        )
    except EpisodeError as e:
        return e


def _job_worker(args):
    return _run_job(*args)


def run_jobs(cfg: ExperimentConfig, jobs, maps: dict, params=None, workers: int | None = None):
    """Run episodes, in order, optionally over a process pool. Failed episodes come back as exceptions."""
    workers = cfg.workers if workers is None else workers
    args = [(cfg, j, maps[j.map_id], params) for j in jobs]
    if workers <= 1 or len(args) <= 1:
        return [_run_job(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_job_worker, args, chunksize=max(1, len(args) // (4 * workers))))


def evaluation_jobs(cfg: ExperimentConfig, policy: str, task: str, split: str, map_ids, n_episodes=None):
    """Episodes are assigned to maps round-robin; episode i uses seed ``cfg.seed + i``."""
    map_ids = sorted(map_ids)
    n = cfg.n_episodes if n_episodes is None else n_episodes
    return [Job(policy, task, split, map_ids[i % len(map_ids)], cfg.seed + i) for i in range(n)]


def evaluate(cfg, policy, task, split, maps, params=None, n_episodes=None):
    jobs = evaluation_jobs(cfg, policy, task, split, maps.keys(), n_episodes)
    return jobs, run_jobs(cfg, jobs, maps, params)


# ---------------------------------------------------------------------------
# training


def train_policy(cfg: ExperimentConfig, train_maps: dict, init_mean=None, callback=None, log_file=None) -> CEMResult:
    """Cross-entropy search for learned-policy parameters on the training maps.

    A candidate's score is its mean episodic return over
    ``episodes_per_eval`` episodes. Evaluation seeds are the same for every
    candidate of a generation and, unless ``train_fresh_seeds`` is set, for
    every generation.
    """
    tcfg = cfg.trainer()
    task = cfg.train_task_spec()
    arch = cfg.arch()
    map_ids = sorted(train_maps)
    generation = [0]
    if log_file is not None:
        log_file.write(f"training maps: {','.join(map_ids)}\n")

    def jobs_for(gen):
        offset = gen * tcfg.episodes_per_eval if cfg.train_fresh_seeds else 0
        base = 1_000_000 + cfg.train_seed * 10_000 + offset
        return [
            Job("learned", task.kind.value, "seen", map_ids[(offset + i) % len(map_ids)], base + i, T=task.T, n_particles=task.n_particles)
            for i in range(tcfg.episodes_per_eval)
        ]

    def evaluate_batch(cands):
        jobs = jobs_for(generation[0])
        args = [(cfg, j, train_maps[j.map_id], c) for c in cands for j in jobs]
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                outs = list(pool.map(_job_worker, args))
        else:
            outs = [_run_job(*a) for a in args]
        if log_file is not None:
            log_file.write(f"generation {generation[0]}: maps {','.join(sorted({j.map_id for j in jobs}))}\n")
        returns = []
        for i in range(len(cands)):
            chunk = outs[i * len(jobs) : (i + 1) * len(jobs)]
            if any(isinstance(r, Exception) for r in chunk):
                returns.append(float("nan"))
            else:
                returns.append(float(np.mean([r.rewards.sum() for r in chunk])))
        return returns

    def on_generation(point):
        generation[0] += 1
        if callback is not None:
            callback(point)

    return cem_optimize(None, arch.n_params, tcfg, init_mean=init_mean, evaluate_batch=evaluate_batch, callback=on_generation)


# ---------------------------------------------------------------------------
# full experiment


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> tuple[list, int]:
    """Execute every policy x task x split cell and write the result files.

    Returns (summary rows, exit status) where status 2 signals an episode failure.
    """
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(cfg))
    seen, unseen = load_corpus(cfg)
    split_maps = {"seen": seen, "unseen": unseen}

    params = None
    if "learned" in cfg.policies:
        if cfg.policy_file:
            params, _ = load_policy(cfg.policy_file)
        else:
            with open(out / "training_log.txt", "w") as lf:
                res = train_policy(cfg, seen, log_file=lf)
            params = res.best_params
            save_policy(out / "policy.apfn", params, cfg.arch())
            write_curve_csv(out / "training_curve.csv", res.curve)

    rows = []
    summary = []
    status = 0
    for policy in cfg.policies:
        for task in cfg.tasks:
            for split in cfg.splits:
                maps = split_maps[split]
                if not maps:
                    continue
                jobs, results = evaluate(cfg, policy, task, split, maps, params)
                good = []
                for job, r in zip(jobs, results):
                    if isinstance(r, Exception):
                        log.error("episode failed: %s %s %s seed %d: %s", policy, task, job.map_id, job.seed, r)
                        status = 2
                        continue
                    good.append(r)
                    rows.append(metrics.episode_row(r, split))
                if good:
                    rep = metrics.aggregate(good)
                    summary.append((policy, task, split, rep.rmse_position_cm, rep.rmse_orientation_rad, rep.n_episodes))
    (out / "results.csv").write_text(metrics.results_csv(rows))
    (out / "summary.csv").write_text(metrics.summary_csv(summary))
    (out / "summary.txt").write_text(metrics.summary_table(summary))
    return summary, status

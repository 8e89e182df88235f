"""Elitist cross-entropy method over flat parameter vectors."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainerConfig:
    population: int = 16
    elite_frac: float = 0.25
    generations: int = 10
    episodes_per_eval: int = 4
    init_std: float = 0.1
    min_std: float = 0.01
    seed: int = 0
    reevaluate_elites: bool = False

    def __post_init__(self):
        if not 0.0 < self.elite_frac < 1.0:
            raise ValueError("elite_frac must lie in (0, 1)")
        if self.population * self.elite_frac < 2:
            raise ValueError("population * elite_frac must be at least 2")
        if self.generations < 0:
            raise ValueError("generations must be non-negative")

    @property
    def n_elite(self) -> int:
        return int(math.floor(self.population * self.elite_frac))


@dataclass
class CurvePoint:
    generation: int
    mean_return: float
    elite_return: float
    best_return: float


@dataclass
class CEMResult:
    best_params: np.ndarray
    best_return: float
    mean: np.ndarray
    std: np.ndarray
    curve: list[CurvePoint] = field(default_factory=list)
    discarded: int = 0


def cem_optimize(
    objective: Callable[[np.ndarray], float],
    dim: int,
    cfg: TrainerConfig,
    init_mean: np.ndarray | None = None,
    evaluate_batch: Callable[[Sequence[np.ndarray]], list[float]] | None = None,
    callback: Callable[[CurvePoint], None] | None = None,
) -> CEMResult:
    """Maximize ``objective`` with a diagonal-Gaussian cross-entropy method.

    Generation 0 evaluates the initial population; each further generation
    refits mean and std to the elites and resamples. The previous elites are
    carried over unchanged, so with a deterministic objective the elite mean
    never decreases.

    The std is measured around the previous mean rather than the new one:
    while the elites keep moving in one direction the search width stays
    proportional to the step, which prevents the early collapse plain CEM
    shows when the optimum lies outside the initial sampling cloud.

    With ``reevaluate_elites`` the carried elites are scored again alongside
    the new candidates. Use it when the objective is noisy or changes between
    generations, so a lucky early score cannot hold an elite slot forever.
    """
    rng = np.random.default_rng(cfg.seed)
    mean = np.zeros(dim) if init_mean is None else np.asarray(init_mean, dtype=float).copy()
    std = np.full(dim, cfg.init_std)
    n_elite = cfg.n_elite
    if evaluate_batch is None:
        evaluate_batch = lambda cands: [objective(c) for c in cands]  # noqa: E731

    elites: list[tuple[float, np.ndarray]] = []
    best = (-math.inf, mean.copy())
    curve = []
    discarded = 0
    for gen in range(cfg.generations + 1):
        n_new = cfg.population - len(elites)
        cands = [mean + std * rng.standard_normal(dim) for _ in range(n_new)]
        if cfg.reevaluate_elites:
            cands = [c for _, c in elites] + cands
            scored = []
        else:
            scored = list(elites)
        returns = evaluate_batch(cands)
        for c, r in zip(cands, returns):
            r = float(r)
            if not math.isfinite(r):
                discarded += 1
                log.warning("generation %d: discarded candidate with non-finite return %r", gen, r)
                continue
            scored.append((r, c))
        if len(scored) < 2:
            raise RuntimeError("fewer than two candidates with finite returns")
        # stable: ties keep carried-over elites first
        scored.sort(key=lambda t: -t[0])
        elites = scored[:n_elite]
        if elites[0][0] > best[0]:
            best = (elites[0][0], elites[0][1].copy())
        pop_returns = [r for r, _ in scored]
        point = CurvePoint(gen, float(np.mean(pop_returns)), float(np.mean([r for r, _ in elites])), best[0])
        curve.append(point)
        log.info("generation %d: mean %.4f elite %.4f best %.4f", gen, point.mean_return, point.elite_return, point.best_return)
        if callback is not None:
            callback(point)
        if gen < cfg.generations:
            e = np.stack([c for _, c in elites])
            spread = np.sqrt(np.mean((e - mean) ** 2, axis=0))
            mean = e.mean(axis=0)
            std = np.maximum(spread, cfg.min_std)
    return CEMResult(best[1], best[0], mean, std, curve, discarded)


def write_curve_csv(path, curve: Sequence[CurvePoint]) -> None:
    lines = ["generation,mean_return,elite_return,best_return"]
    lines.extend(f"{p.generation},{p.mean_return!r},{p.elite_return!r},{p.best_return!r}" for p in curve)
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")

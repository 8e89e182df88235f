"""Episode aggregation and result tables."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .episode import EpisodeResult
from .worldmap import wrap_angle

RESULT_COLUMNS = ["policy", "task", "split", "map_id", "seed", "rmse_pos_cm", "rmse_orient_rad", "mean_reward", "collisions"]


@dataclass
class MetricsReport:
    rmse_position_cm: float
    rmse_orientation_rad: float
    n_episodes: int
    breakdown: dict = field(default_factory=dict)


def _rmse(results: Sequence[EpisodeResult]):
    pos = np.array([r.final_position_error for r in results])
    ang = np.array([wrap_angle(r.est_poses[-1, 2] - r.true_poses[-1, 2]) for r in results])
    return 100.0 * math.sqrt(float(np.mean(pos**2))), math.sqrt(float(np.mean(ang**2)))


def aggregate(results: Sequence[EpisodeResult]) -> MetricsReport:
    """Root mean squared final errors; position in centimeters, heading in radians."""
    results = list(results)
    if not results:
        raise ValueError("aggregate needs at least one episode")
    pos, ang = _rmse(results)
    groups = defaultdict(list)
    for r in results:
        groups[(r.policy_id, r.task)].append(r)
    breakdown = {}
    for key in sorted(groups):
        p, a = _rmse(groups[key])
        breakdown[key] = (p, a, len(groups[key]))
    return MetricsReport(pos, ang, len(results), breakdown)


def episode_row(r: EpisodeResult, split: str) -> list:
    return [
        r.policy_id,
        r.task,
        split,
        r.map_id,
        r.seed,
        f"{100.0 * r.final_position_error:.6f}",
        f"{r.final_orientation_error:.6f}",
        f"{float(np.mean(r.rewards)):.6f}",
        int(np.sum(r.collided)),
    ]


def results_csv(rows: Iterable[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    w.writerows(rows)
    return buf.getvalue()


def summary_csv(summary: Sequence[tuple]) -> str:
    """Rows of (policy, task, split, rmse_pos_cm, rmse_orient_rad, n_episodes)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["policy", "task", "split", "rmse_pos_cm", "rmse_orient_rad", "n_episodes"])
    for policy, task, split, p, a, n in summary:
        w.writerow([policy, task, split, f"{p:.4f}", f"{a:.4f}", n])
    return buf.getvalue()


def summary_table(summary: Sequence[tuple]) -> str:
    """Human-readable table: one row per policy, position/orient per task x split."""
    cols = sorted({(t, s) for _, t, s, *_ in summary}, key=lambda ts: (ts[1] != "seen", ts[1], ts[0]))
    cell = {(p, t, s): (pos, ang) for p, t, s, pos, ang, _ in summary}
    policies = list(dict.fromkeys(p for p, *_ in summary))
    head = f"{'policy':<10}" + "".join(f"{t + '/' + s:>24}" for t, s in cols)
    sub = f"{'':<10}" + "".join(f"{'pos[cm]':>12}{'orient':>12}" for _ in cols)
    lines = [head, sub, "-" * len(sub)]
    for p in policies:
        row = f"{p:<10}"
        for t, s in cols:
            if (p, t, s) in cell:
                pos, ang = cell[(p, t, s)]
                row += f"{pos:>12.1f}{ang:>12.2f}"
            else:
                row += f"{'-':>12}{'-':>12}"
        lines.append(row)
    return "\n".join(lines) + "\n"

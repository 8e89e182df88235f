"""Particle filter: transition, likelihood-field weighting, soft-resampling,
pose estimation and the pose loss.

Weights live in the log domain. The soft-resampling proposal mixes the
normalized weights with a uniform distribution,

    q(k) = alpha * w_k + (1 - alpha) / K,

and every drawn particle carries the importance correction w_k / q(k), so the
weights stay a differentiable function of the pre-resampling weights whenever
alpha < 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .simulator import CellCode, LidarScan, OdomDelta, scan_to_local_occupancy
from .transform import crop_source_cells, sample_crop
from .worldmap import DistanceField, OccupancyGrid, Pose, wrap_angle


class BeliefCollapsed(RuntimeError):
    pass


class OrientationUndefined(ValueError):
    pass


@dataclass(frozen=True)
class FilterConfig:
    alpha: float = 0.5
    beta: float = 0.36
    sigma_lhood: float = 0.3
    trans_noise: tuple = (0.01, math.pi / 36)
    local_map_size: int = 56
    eps_floor: float = 1e-9
    resample: str = "systematic"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.sigma_lhood > 0:
            raise ValueError("sigma_lhood must be positive")
        if self.resample not in ("systematic", "multinomial"):
            raise ValueError(f"unknown resampling scheme {self.resample!r}")


@dataclass
class ParticleSet:
    """K weighted pose hypotheses.

    ``poses`` is a (K, 3) array of (x, y, phi); ``log_weights`` has shape (K,).
    """

    poses: np.ndarray
    log_weights: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=float).reshape(-1, 3)
        self.log_weights = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if len(self.poses) < 1:
            raise ValueError("a particle set needs at least one particle")
        if len(self.poses) != len(self.log_weights):
            raise ValueError("poses and log_weights differ in length")

    @classmethod
    def uniform(cls, poses) -> "ParticleSet":
        poses = np.asarray(poses, dtype=float).reshape(-1, 3).copy()
        poses[:, 2] = wrap_angle(poses[:, 2])
        k = len(poses)
        return cls(poses, np.full(k, -math.log(k)), normalized=True)

    def __len__(self):
        return len(self.poses)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def copy(self) -> "ParticleSet":
        return ParticleSet(self.poses.copy(), self.log_weights.copy(), self.normalized)

    def permuted(self, perm) -> "ParticleSet":
        return ParticleSet(self.poses[perm], self.log_weights[perm], self.normalized)


def logsumexp(a: np.ndarray) -> float:
    m = np.max(a)
    if not np.isfinite(m):
        return m
    return float(m + np.log(np.sum(np.exp(a - m))))


def normalize(ps: ParticleSet) -> ParticleSet:
    lse = logsumexp(ps.log_weights)
    if not np.isfinite(lse):
        raise BeliefCollapsed("belief collapsed: no particle has finite weight")
    return ParticleSet(ps.poses, ps.log_weights - lse, normalized=True)


# ---------------------------------------------------------------------------
# transition


def predict(ps: ParticleSet, odom: OdomDelta, cfg: FilterConfig, rng: np.random.Generator) -> ParticleSet:
    """Compose each particle with the odometry delta in its own frame, plus noise."""
    k = len(ps)
    sxy, sphi = cfg.trans_noise
    d = np.broadcast_to(np.array([odom.dx, odom.dy, odom.dphi]), (k, 3)).copy()
    if sxy > 0 or sphi > 0:
        d += rng.normal(0.0, 1.0, (k, 3)) * (sxy, sxy, sphi)
    x, y, phi = ps.poses.T
    c, s = np.cos(phi), np.sin(phi)
    out = np.column_stack(
        [x + c * d[:, 0] - s * d[:, 1], y + s * d[:, 0] + c * d[:, 1], wrap_angle(phi + d[:, 2])]
    )
    return ParticleSet(out, ps.log_weights.copy(), ps.normalized)


# ---------------------------------------------------------------------------
# particle-centric local maps


def extract_local_map(grid: OccupancyGrid, pose: Pose, size: int) -> np.ndarray:
    """size x size window of cell codes centered on ``pose``, heading along +columns.

    Cells mapping outside the grid are Unexplored.
    """
    if size % 2 != 1:
        raise ValueError("size must be odd")
    rows, cols, valid = crop_source_cells(grid, pose.x, pose.y, pose.phi, size)
    return sample_crop(grid.cells, rows, cols, valid, CellCode.UNEXPLORED)


def extract_local_maps(grid: OccupancyGrid, poses: np.ndarray, size: int) -> np.ndarray:
    """Batched :func:`extract_local_map` over a (K, 3) pose array -> (K, size, size)."""
    if size % 2 != 1:
        raise ValueError("size must be odd")
    rows, cols, valid = crop_source_cells(grid, poses[:, 0], poses[:, 1], poses[:, 2], size)
    return sample_crop(grid.cells, rows, cols, valid, CellCode.UNEXPLORED)


# ---------------------------------------------------------------------------
# observation models


class ObservationModel(Protocol):
    def log_likelihood(self, poses: np.ndarray, scan: LidarScan) -> np.ndarray: ...


class LikelihoodField:
    """Per-beam Gaussian on the endpoint's distance to the nearest obstacle."""

    def __init__(self, dfield: DistanceField, sigma: float, eps_floor: float = 1e-9):
        self.dfield = dfield
        self.grid = dfield.grid
        self.sigma = sigma
        self.eps_floor = eps_floor

    def endpoint_distances(self, poses: np.ndarray, scan: LidarScan) -> np.ndarray:
        """(K, B') distances for the beams that returned before max range."""
        hit = scan.ranges < scan.max_range
        ranges = scan.ranges[hit]
        ang = scan.beam_angles[hit]
        # cos/sin(phi + a) by angle addition: outer products instead of K*B trig calls
        cp, sp = np.cos(poses[:, 2:3]), np.sin(poses[:, 2:3])
        rc, rs = ranges * np.cos(ang), ranges * np.sin(ang)
        ex = poses[:, 0:1] + cp * rc - sp * rs
        ey = poses[:, 1:2] + sp * rc + cp * rs
        return self.dfield.lookup(ex, ey, outside=np.inf)

    def beam_log_likelihood(self, d: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.exp(-(d * d) / (2.0 * self.sigma**2)) + self.eps_floor)

    def log_likelihood(self, poses, scan):
        d = self.endpoint_distances(poses, scan)
        return self.beam_log_likelihood(d).sum(axis=1)


class LocalMapMatch:
    """Scores each particle by comparing its local map crop with the scan's
    egocentric occupancy image.

    Works purely on particle-centric local information; a learned model with
    the same signature can replace it.
    """

    def __init__(self, grid: OccupancyGrid, size: int = 21, hit_gain: float = 1.0, miss_gain: float = 1.0):
        self.grid = grid
        self.size = size
        self.hit_gain = hit_gain
        self.miss_gain = miss_gain

    def log_likelihood(self, poses, scan):
        obs = scan_to_local_occupancy(scan, self.size, self.grid.resolution)
        local = extract_local_maps(self.grid, poses, self.size)
        seen_occ = obs == CellCode.OCCUPIED
        seen_free = obs == CellCode.FREE
        agree = ((local == CellCode.OCCUPIED) & seen_occ).sum(axis=(1, 2))
        clash = ((local == CellCode.OCCUPIED) & seen_free).sum(axis=(1, 2))
        return self.hit_gain * agree - self.miss_gain * clash


def reweight(ps: ParticleSet, log_lik: np.ndarray) -> ParticleSet:
    out = ParticleSet(ps.poses, ps.log_weights + log_lik, normalized=False)
    return normalize(out)


def update_weights(
    ps: ParticleSet,
    scan: LidarScan,
    dfield: DistanceField,
    grid: OccupancyGrid,
    cfg: FilterConfig,
    model: ObservationModel | None = None,
) -> ParticleSet:
    """Multiply in the scan likelihood and renormalize.

    Defaults to the likelihood field built from ``dfield``. Beams at max
    range carry no information and are skipped.
    """
    if dfield.grid is not grid and dfield.shape != grid.cells.shape:
        raise ValueError("distance field does not match grid")
    if model is None:
        model = LikelihoodField(dfield, cfg.sigma_lhood, cfg.eps_floor)
    return reweight(ps, model.log_likelihood(ps.poses, scan))


# ---------------------------------------------------------------------------
# soft-resampling


def proposal(weights: np.ndarray, alpha: float) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    k = len(weights)
    return alpha * weights + (1.0 - alpha) / k


def draw_indices(q: np.ndarray, n: int, rng: np.random.Generator, method: str = "systematic") -> np.ndarray:
    cdf = np.cumsum(q)
    cdf /= cdf[-1]
    if method == "systematic":
        u = (rng.random() + np.arange(n)) / n
    elif method == "multinomial":
        u = rng.random(n)
    else:
        raise ValueError(f"unknown resampling scheme {method!r}")
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(q) - 1)


def soft_resample_indices(log_weights: np.ndarray, alpha: float, rng, method="systematic"):
    """Draw ancestors from q and return (ancestors, log corrected weights).

    The corrected weights log(w_a / q_a) are *not* renormalized; divided by K
    they form an unbiased estimate of the input weights' mass on any set.
    """
    w = np.exp(log_weights)
    q = proposal(w, alpha)
    idx = draw_indices(q, len(w), rng, method)
    return idx, log_weights[idx] - np.log(q[idx])


def soft_resample(ps: ParticleSet, alpha: float, rng: np.random.Generator, method: str = "systematic") -> ParticleSet:
    if not ps.normalized:
        raise ValueError("soft_resample needs a normalized particle set")
    idx, log_corr = soft_resample_indices(ps.log_weights, alpha, rng, method)
    return normalize(ParticleSet(ps.poses[idx], log_corr))


# ---------------------------------------------------------------------------
# estimation and loss


@dataclass(frozen=True)
class Estimate:
    pose: Pose
    loss: float | None = None


def weighted_circular_mean(weights, angles) -> float:
    s = math.fsum(weights * np.sin(angles))
    c = math.fsum(weights * np.cos(angles))
    if abs(s) < 1e-12 and abs(c) < 1e-12:
        raise OrientationUndefined("orientation undefined: antipodal belief")
    return math.atan2(s, c)


def weighted_pose_mean(weights: np.ndarray, poses: np.ndarray) -> Pose:
    """Weighted mean position and circular-mean heading.

    Sums use exact rounding so the result does not depend on particle order.
    """
    total = math.fsum(weights)
    x = math.fsum(weights * poses[:, 0]) / total
    y = math.fsum(weights * poses[:, 1]) / total
    return Pose(x, y, weighted_circular_mean(weights, poses[:, 2]))


def estimate_pose(ps: ParticleSet) -> Pose:
    if not ps.normalized:
        raise ValueError("estimate_pose needs a normalized particle set")
    return weighted_pose_mean(ps.weights, ps.poses)


def pose_loss(est: Pose, truth: Pose, beta: float = 0.36) -> float:
    """Squared position error plus beta times the squared wrapped heading error."""
    dphi = wrap_angle(est.phi - truth.phi)
    return (est.x - truth.x) ** 2 + (est.y - truth.y) ** 2 + beta * dphi**2


# ---------------------------------------------------------------------------
# differentiability through the resampling correction


def _resampled_loss(w, poses, ancestors, alpha, truth, beta):
    k = len(w)
    q = alpha * w + (1.0 - alpha) / k
    corr = w[ancestors] / q[ancestors]
    p = poses[ancestors]
    total = corr.sum()
    x = (corr * p[:, 0]).sum() / total
    y = (corr * p[:, 1]).sum() / total
    phi = math.atan2((corr * np.sin(p[:, 2])).sum(), (corr * np.cos(p[:, 2])).sum())
    return pose_loss(Pose(x, y, phi), truth, beta)


def resampled_loss_and_grad(w, poses, ancestors, alpha, truth: Pose, beta=0.36):
    """Loss after soft-resampling with fixed ancestors, and its gradient
    with respect to the pre-resampling weights ``w``."""
    w = np.asarray(w, dtype=float)
    poses = np.asarray(poses, dtype=float)
    k = len(w)
    q = alpha * w + (1.0 - alpha) / k
    # d(w/q)/dw = (q - alpha*w)/q^2 = ((1-alpha)/K)/q^2
    dcorr_dw = ((1.0 - alpha) / k) / q**2

    corr = w[ancestors] / q[ancestors]
    p = poses[ancestors]
    total = corr.sum()
    x = (corr * p[:, 0]).sum() / total
    y = (corr * p[:, 1]).sum() / total
    sn = (corr * np.sin(p[:, 2])).sum()
    cs = (corr * np.cos(p[:, 2])).sum()
    phi = math.atan2(sn, cs)
    est = Pose(x, y, phi)
    loss = pose_loss(est, truth, beta)

    dphi = wrap_angle(phi - truth.phi)
    # derivative of the loss with respect to each drawn particle's corrected weight
    g_corr = (
        2.0 * (x - truth.x) * (p[:, 0] - x) / total
        + 2.0 * (y - truth.y) * (p[:, 1] - y) / total
        + 2.0 * beta * dphi * (cs * np.sin(p[:, 2]) - sn * np.cos(p[:, 2])) / (sn * sn + cs * cs)
    )
    grad = np.zeros(k)
    np.add.at(grad, ancestors, g_corr * dcorr_dw[ancestors])
    return loss, grad


@dataclass
class GradientReport:
    alpha: float
    analytic: np.ndarray
    numeric: np.ndarray
    max_rel_error: float
    analytic_norm: float
    numeric_norm: float
    correction_grad: np.ndarray = field(repr=False, default=None)


def gradient_check(w, poses, ancestors, alpha, truth: Pose, beta=0.36, h=1e-6) -> GradientReport:
    """Compare the analytic gradient of the post-resampling loss with central differences.

    ``ancestors`` fixes the resampling draws (common random numbers).
    """
    w = np.asarray(w, dtype=float)
    ancestors = np.asarray(ancestors)
    _, analytic = resampled_loss_and_grad(w, poses, ancestors, alpha, truth, beta)
    numeric = np.zeros_like(w)
    for j in range(len(w)):
        wp = w.copy()
        wm = w.copy()
        wp[j] += h
        wm[j] -= h
        numeric[j] = (
            _resampled_loss(wp, poses, ancestors, alpha, truth, beta)
            - _resampled_loss(wm, poses, ancestors, alpha, truth, beta)
        ) / (2 * h)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    diff = np.abs(analytic - numeric)
    rel = np.where(denom > 0, diff / np.where(denom > 0, denom, 1.0), 0.0)
    k = len(w)
    q = alpha * w + (1.0 - alpha) / k
    return GradientReport(
        alpha=alpha,
        analytic=analytic,
        numeric=numeric,
        max_rel_error=float(rel.max()),
        analytic_norm=float(np.linalg.norm(analytic)),
        numeric_norm=float(np.linalg.norm(numeric)),
        correction_grad=((1.0 - alpha) / k) / q**2,
    )


# ---------------------------------------------------------------------------
# debugging dump


def format_particles(ps: ParticleSet, step: int, alpha: float) -> str:
    lines = [f"# step {step} alpha {alpha!r}"]
    lines.extend(f"{x!r} {y!r} {phi!r} {lw!r}" for (x, y, phi), lw in zip(ps.poses.tolist(), ps.log_weights.tolist()))
    return "\n".join(lines) + "\n"


def parse_particles(text: str):
    """Inverse of :func:`format_particles`; returns (step, alpha, ParticleSet)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if head[:2] != ["#", "step"] or head[3] != "alpha":
        raise ValueError("bad particle dump header")
    rows = np.array([[float(t) for t in ln.split()] for ln in lines[1:]])
    ps = ParticleSet(rows[:, :3], rows[:, 3])
    ps.normalized = abs(logsumexp(ps.log_weights)) < 1e-9
    return int(head[2]), float(head[4]), ps

"""Belief maps: the particle set projected onto the map grid, and local crops of it.

Channel layout (H x W x 4):
    0  occupancy, cell codes scaled to {0, 0.5, 1}
    1  summed particle weight
    2  summed weight * sin(phi)
    3  summed weight * cos(phi)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pfilter import ParticleSet, weighted_pose_mean
from .transform import crop_source_cells, sample_crop
from .worldmap import OccupancyGrid, Pose


@dataclass(frozen=True)
class ModeBinning:
    xy: float = 1.0
    phi: float = math.radians(60.0)


def project_particles(ps: ParticleSet, grid: OccupancyGrid) -> np.ndarray:
    if not ps.normalized:
        raise ValueError("project_particles needs a normalized particle set")
    h, w = grid.height, grid.width
    bm = np.zeros((h, w, 4))
    bm[:, :, 0] = grid.cells / 2.0
    rows, cols = grid.world_to_cell(ps.poses[:, 0], ps.poses[:, 1])
    rows = np.clip(rows, 0, h - 1)
    cols = np.clip(cols, 0, w - 1)
    flat = rows * w + cols
    wt = ps.weights
    phi = ps.poses[:, 2]
    n = h * w
    bm[:, :, 1] = np.bincount(flat, weights=wt, minlength=n).reshape(h, w)
    bm[:, :, 2] = np.bincount(flat, weights=wt * np.sin(phi), minlength=n).reshape(h, w)
    bm[:, :, 3] = np.bincount(flat, weights=wt * np.cos(phi), minlength=n).reshape(h, w)
    return bm


def extract_modes(ps: ParticleSet, k: int = 1, binning: ModeBinning = ModeBinning()) -> list[Pose]:
    """Attention poses for the local belief crops.

    ``k == 1`` gives the weighted mean pose. Otherwise particles are binned
    in world x, y and heading, and the ``k`` heaviest bins each contribute
    their own weighted mean pose.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not ps.normalized:
        raise ValueError("extract_modes needs a normalized particle set")
    wt = ps.weights
    if k == 1:
        return [weighted_pose_mean(wt, ps.poses)]

    bx = np.floor(ps.poses[:, 0] / binning.xy).astype(np.int64)
    by = np.floor(ps.poses[:, 1] / binning.xy).astype(np.int64)
    nphi = int(round(2 * math.pi / binning.phi))
    bp = np.floor((ps.poses[:, 2] + math.pi) / binning.phi).astype(np.int64) % nphi
    keys = np.column_stack([bx, by, bp])
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    totals = [math.fsum(wt[inverse == i]) for i in range(len(uniq))]
    # np.unique sorts keys lexicographically; a stable sort on -weight keeps that as tie-break
    order = sorted(range(len(uniq)), key=lambda i: -totals[i])
    modes = []
    for i in order[:k]:
        m = inverse == i
        modes.append(weighted_pose_mean(wt[m], ps.poses[m]))
    return modes


def extract_local_belief(bm: np.ndarray, grid: OccupancyGrid, attend: Pose, size: int = 56) -> np.ndarray:
    """Rotated crop of all four channels centered on ``attend``.

    The heading channels are re-expressed relative to ``attend.phi``; cells
    mapping outside the map are zero.
    """
    rows, cols, valid = crop_source_cells(grid, attend.x, attend.y, attend.phi, size)
    crop = sample_crop(bm, rows, cols, valid, 0.0)
    c, s = math.cos(attend.phi), math.sin(attend.phi)
    sn = crop[..., 2].copy()
    cs = crop[..., 3].copy()
    # sin(a - b), cos(a - b) expanded over the weighted sums
    crop[..., 2] = sn * c - cs * s
    crop[..., 3] = cs * c + sn * s
    return crop


def write_pgm(path, image: np.ndarray, lo: float | None = None, hi: float | None = None) -> None:
    """Write a 2D array as an 8-bit binary portable graymap, row 0 at the bottom."""
    a = np.asarray(image, dtype=float)
    lo = a.min() if lo is None else lo
    hi = a.max() if hi is None else hi
    span = hi - lo if hi > lo else 1.0
    px = np.clip(np.round((a - lo) / span * 255.0), 0, 255).astype(np.uint8)[::-1]
    h, w = px.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + px.tobytes())


def dump_belief(directory, step: int, bm: np.ndarray) -> list[Path]:
    """One graymap per channel, named ``step_%04d_ch%d.pgm``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ranges = [(0.0, 1.0), (0.0, None), (-1.0, 1.0), (-1.0, 1.0)]
    out = []
    for ch in range(bm.shape[-1]):
        lo, hi = ranges[ch] if ch < len(ranges) else (None, None)
        p = directory / ("step_%04d_ch%d.pgm" % (step, ch))
        write_pgm(p, bm[..., ch], lo, hi)
        out.append(p)
    return out

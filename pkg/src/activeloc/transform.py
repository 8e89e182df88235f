"""Rotated, translated crops of grid-aligned arrays (nearest-neighbor inverse mapping)."""

from __future__ import annotations

import numpy as np

from .worldmap import OccupancyGrid


def crop_source_cells(grid: OccupancyGrid, x, y, phi, size: int):
    """Source (row, col) for every cell of a ``size`` x ``size`` crop.

    The crop's center cell (index ``size // 2``) sits at world (x, y) and the
    crop's +column axis points along world heading ``phi``. Each output cell
    center is mapped back into the grid and takes the cell containing it.
    Accepts scalar or (K,) poses; returns arrays shaped (..., size, size)
    plus a validity mask for in-bounds sources.
    """
    x = np.asarray(x, dtype=float)[..., None, None]
    y = np.asarray(y, dtype=float)[..., None, None]
    phi = np.asarray(phi, dtype=float)[..., None, None]
    res = grid.resolution
    center = size // 2
    offs = (np.arange(size) - center) * res
    u = offs[None, :]  # along columns
    v = offs[:, None]  # along rows
    c, s = np.cos(phi), np.sin(phi)
    wx = x + c * u - s * v
    wy = y + s * u + c * v
    rows, cols = grid.world_to_cell(wx, wy)
    valid = grid.in_bounds(rows, cols)
    return rows, cols, valid


def sample_crop(values: np.ndarray, rows, cols, valid, fill):
    """Gather ``values[rows, cols]`` (trailing channel axes allowed), ``fill`` where invalid."""
    r = np.where(valid, rows, 0)
    c = np.where(valid, cols, 0)
    out = values[r, c]
    mask = ~valid
    if out.ndim > valid.ndim:
        mask = mask.reshape(mask.shape + (1,) * (out.ndim - valid.ndim))
        mask = np.broadcast_to(mask, out.shape)
    return np.where(mask, np.asarray(fill, dtype=out.dtype), out)

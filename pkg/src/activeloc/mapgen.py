"""Procedural multi-room floorplans (rooms, doorways, furniture blocks)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .worldmap import DEFAULT_RESOLUTION, DEFAULT_ROBOT_RADIUS, CellCode, OccupancyGrid


@dataclass(frozen=True)
class FloorplanConfig:
    width_m: tuple = (6.0, 9.0)
    height_m: tuple = (5.0, 8.0)
    resolution: float = DEFAULT_RESOLUTION
    wall_cells: int = 2
    min_room_m: float = 2.4
    door_m: float = 0.9
    cutout_prob: float = 0.5
    furniture: tuple = (2, 6)
    furniture_m: tuple = (0.3, 1.2)
    robot_radius: float = DEFAULT_ROBOT_RADIUS
    max_tries: int = 200


def _split_rooms(rng, box, min_cells, out):
    """Recursive binary space partition; appends (r0, c0, r1, c1, axis, pos) splits."""
    r0, c0, r1, c1 = box
    h, w = r1 - r0, c1 - c0
    can_v = w >= 2 * min_cells
    can_h = h >= 2 * min_cells
    if not (can_v or can_h):
        return
    if can_v and (not can_h or w >= h):
        pos = int(rng.integers(c0 + min_cells, c1 - min_cells + 1))
        out.append((box, 1, pos))
        _split_rooms(rng, (r0, c0, r1, pos), min_cells, out)
        _split_rooms(rng, (r0, pos, r1, c1), min_cells, out)
    else:
        pos = int(rng.integers(r0 + min_cells, r1 - min_cells + 1))
        out.append((box, 0, pos))
        _split_rooms(rng, (r0, c0, pos, c1), min_cells, out)
        _split_rooms(rng, (pos, c0, r1, c1), min_cells, out)


def _try_floorplan(rng, cfg: FloorplanConfig):
    res = cfg.resolution
    w = int(round(rng.uniform(*cfg.width_m) / res))
    h = int(round(rng.uniform(*cfg.height_m) / res))
    wc = cfg.wall_cells

    inside = np.ones((h, w), dtype=bool)
    if rng.random() < cfg.cutout_prob:
        ch = int(rng.integers(h // 5, h // 2.5))
        cw = int(rng.integers(w // 5, w // 2.5))
        rs = slice(0, ch) if rng.random() < 0.5 else slice(h - ch, h)
        cs = slice(0, cw) if rng.random() < 0.5 else slice(w - cw, w)
        inside[rs, cs] = False

    outside = np.pad(~inside, wc, constant_values=True)
    near_out = ndimage.binary_dilation(outside, structure=np.ones((2 * wc + 1, 2 * wc + 1), bool))[wc:-wc, wc:-wc]
    cells = np.full((h, w), CellCode.FREE, dtype=np.int8)
    cells[near_out] = CellCode.OCCUPIED
    cells[~inside] = CellCode.UNEXPLORED

    splits = []
    _split_rooms(rng, (wc, wc, h - wc, w - wc), int(round(cfg.min_room_m / res)), splits)
    door = int(round(cfg.door_m / res))
    doors = np.zeros((h, w), dtype=bool)
    for (r0, c0, r1, c1), axis, pos in splits:
        if axis == 1:
            span = (r0, r1)
            wall = (slice(r0, r1), slice(pos - wc // 2, pos - wc // 2 + wc))
        else:
            span = (c0, c1)
            wall = (slice(pos - wc // 2, pos - wc // 2 + wc), slice(c0, c1))
        seg = cells[wall]
        seg[seg == CellCode.FREE] = CellCode.OCCUPIED
        lo, hi = span[0] + wc + 1, span[1] - wc - door - 1
        if hi <= lo:
            return None
        d = int(rng.integers(lo, hi))
        if axis == 1:
            gap = (slice(d, d + door), wall[1])
        else:
            gap = (wall[0], slice(d, d + door))
        g = cells[gap]
        g[g == CellCode.OCCUPIED] = CellCode.FREE
        cells[gap] = np.where(inside[gap], g, CellCode.UNEXPLORED)
        doors[gap] = True

    keep_clear = ndimage.binary_dilation(doors, iterations=int(round(0.7 / res)))
    n_furn = int(rng.integers(cfg.furniture[0], cfg.furniture[1] + 1))
    for _ in range(n_furn):
        fh = int(round(rng.uniform(*cfg.furniture_m) / res))
        fw = int(round(rng.uniform(*cfg.furniture_m) / res))
        r = int(rng.integers(0, h - fh))
        c = int(rng.integers(0, w - fw))
        block = (slice(r, r + fh), slice(c, c + fw))
        if keep_clear[block].any() or (cells[block] == CellCode.UNEXPLORED).any():
            continue
        cells[block] = CellCode.OCCUPIED

    grid = OccupancyGrid(cells, res)
    trav = grid.traversable(cfg.robot_radius)
    labels, n = ndimage.label(trav, structure=np.ones((3, 3), bool))
    if n != 1 or trav.sum() < 0.3 * inside.sum():
        return None
    return grid


def generate_floorplan(rng: np.random.Generator, cfg: FloorplanConfig = FloorplanConfig()) -> OccupancyGrid:
    for _ in range(cfg.max_tries):
        grid = _try_floorplan(rng, cfg)
        if grid is not None:
            return grid
    raise RuntimeError("could not generate a connected floorplan")


def generate_corpus(seed: int, n: int, cfg: FloorplanConfig = FloorplanConfig()) -> list[OccupancyGrid]:
    return [generate_floorplan(np.random.default_rng(s), cfg) for s in np.random.SeedSequence(seed).spawn(n)]


def split_corpus(seed: int, n_train: int, n_test: int, cfg: FloorplanConfig = FloorplanConfig()):
    """Seen (train) and unseen (test) maps with ids ``train_NNN`` / ``test_NNN``."""
    maps = generate_corpus(seed, n_train + n_test, cfg)
    train = {f"train_{i:03d}": g for i, g in enumerate(maps[:n_train])}
    test = {f"test_{i:03d}": g for i, g in enumerate(maps[n_train:])}
    return train, test

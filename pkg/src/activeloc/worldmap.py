"""Occupancy grid, geometry queries and the ``.ogmap`` text format.

All geometry is computed in the grid frame: meters relative to the corner of
cell (0, 0), x along columns, y along rows. Row 0 is the minimum-y row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np
from scipy import ndimage

TWO_PI = 2.0 * math.pi

DEFAULT_RESOLUTION = 0.1
DEFAULT_ROBOT_RADIUS = 0.18


class CellCode(IntEnum):
    FREE = 0
    UNEXPLORED = 1
    OCCUPIED = 2


def wrap_angle(a):
    """Wrap angle(s) into [-pi, pi)."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, TWO_PI) - math.pi
    # mod can round up to exactly 2*pi for tiny negative inputs
    w = np.where(w >= math.pi, w - TWO_PI, w)
    if np.ndim(w) == 0:
        return float(w)
    return w


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "phi", wrap_angle(self.phi))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.phi])

    @classmethod
    def from_array(cls, a) -> "Pose":
        return cls(a[0], a[1], a[2])


class MapError(ValueError):
    """Raised for invalid grids or geometry queries outside the map."""


class MapFormatError(MapError):
    """Parse error in an ``.ogmap`` file; carries the offending position."""

    def __init__(self, message, line=None, row=None, col=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if row is not None:
            where.append(f"row {row}")
        if col is not None:
            where.append(f"col {col}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.row = row
        self.col = col


class OccupancyGrid:
    """Immutable global map.

    Parameters
    ----------
    cells : array-like of shape (height, width)
        Cell codes from :class:`CellCode`.
    resolution : float
        Meters per cell.
    origin : Pose
        World pose of the outer corner of cell (0, 0).
    """

    def __init__(self, cells, resolution=DEFAULT_RESOLUTION, origin=Pose(0.0, 0.0, 0.0)):
        cells = np.array(cells, dtype=np.int8)
        if cells.ndim != 2 or cells.size == 0:
            raise MapError("cells must be a non-empty 2D array")
        if not np.isin(cells, (0, 1, 2)).all():
            raise MapError("cell codes must be 0, 1 or 2")
        if not resolution > 0:
            raise MapError("resolution must be positive")
        cells.setflags(write=False)
        self.cells = cells
        self.resolution = float(resolution)
        self.origin = origin
        self._cos_o = math.cos(origin.phi)
        self._sin_o = math.sin(origin.phi)
        self._occupied = cells == CellCode.OCCUPIED
        self._occupied.setflags(write=False)
        self._cache = {}

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def occupied(self) -> np.ndarray:
        return self._occupied

    @property
    def extent(self) -> tuple[float, float]:
        """Width and height of the map in meters."""
        return self.width * self.resolution, self.height * self.resolution

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and self.origin == other.origin
            and np.array_equal(self.cells, other.cells)
        )

    def __hash__(self):
        return hash((self.cells.tobytes(), self.cells.shape, self.resolution, self.origin))

    def __repr__(self):
        return f"OccupancyGrid({self.width}x{self.height}, res={self.resolution})"

    # frame conversions -------------------------------------------------

    def to_local(self, x, y):
        """World coordinates -> grid-frame meters."""
        dx = np.asarray(x, dtype=float) - self.origin.x
        dy = np.asarray(y, dtype=float) - self.origin.y
        if self.origin.phi == 0.0:
            return dx, dy
        return self._cos_o * dx + self._sin_o * dy, -self._sin_o * dx + self._cos_o * dy

    def to_world(self, lx, ly):
        lx = np.asarray(lx, dtype=float)
        ly = np.asarray(ly, dtype=float)
        if self.origin.phi == 0.0:
            return lx + self.origin.x, ly + self.origin.y
        return (
            self.origin.x + self._cos_o * lx - self._sin_o * ly,
            self.origin.y + self._sin_o * lx + self._cos_o * ly,
        )

    def world_to_cell(self, x, y):
        """Return (row, col) integer indices of the cell containing each point."""
        lx, ly = self.to_local(x, y)
        col = np.floor(lx / self.resolution).astype(np.int64)
        row = np.floor(ly / self.resolution).astype(np.int64)
        return row, col

    def cell_center(self, row, col):
        """World coordinates of cell centers."""
        lx = (np.asarray(col, dtype=float) + 0.5) * self.resolution
        ly = (np.asarray(row, dtype=float) + 0.5) * self.resolution
        return self.to_world(lx, ly)

    def in_bounds(self, row, col):
        row = np.asarray(row)
        col = np.asarray(col)
        return (row >= 0) & (row < self.height) & (col >= 0) & (col < self.width)

    def contains(self, x, y) -> bool:
        r, c = self.world_to_cell(x, y)
        return bool(np.all(self.in_bounds(r, c)))

    # cached derived fields ---------------------------------------------

    def distance_field(self) -> "DistanceField":
        if "dfield" not in self._cache:
            self._cache["dfield"] = distance_transform(self)
        return self._cache["dfield"]

    def traversable(self, robot_radius=DEFAULT_ROBOT_RADIUS) -> np.ndarray:
        key = ("trav", float(robot_radius))
        if key not in self._cache:
            mask = traversable_mask(self, robot_radius)
            mask.setflags(write=False)
            self._cache[key] = mask
        return self._cache[key]


# ---------------------------------------------------------------------------
# file format


MAGIC = "OGMAP"
FORMAT_VERSION = 1


def _tokenize(text):
    """Yield (line_no, tokens) for every non-empty line, comments stripped."""
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = line.split()
        if toks:
            yield i, toks


def parse_map(text: str) -> OccupancyGrid:
    lines = list(_tokenize(text))
    if not lines:
        raise MapFormatError("empty map file", line=1)
    ln, toks = lines[0]
    if toks[0] != MAGIC or len(toks) != 2 or toks[1] != str(FORMAT_VERSION):
        raise MapFormatError(f"expected header '{MAGIC} {FORMAT_VERSION}'", line=ln)
    if len(lines) < 2:
        raise MapFormatError("missing dimension line", line=ln + 1)
    ln, toks = lines[1]
    if len(toks) != 6:
        raise MapFormatError("dimension line needs 6 fields", line=ln)
    try:
        width, height = int(toks[0]), int(toks[1])
        res, ox, oy, ophi = (float(t) for t in toks[2:])
    except ValueError as e:
        raise MapFormatError(f"bad dimension line: {e}", line=ln) from None
    if width <= 0 or height <= 0:
        raise MapFormatError("width and height must be positive", line=ln)
    if not (res > 0 and math.isfinite(res)):
        raise MapFormatError("resolution must be positive", line=ln)

    body = lines[2:]
    cells = np.empty((height, width), dtype=np.int8)
    for row in range(height):
        if row >= len(body):
            raise MapFormatError(f"expected {height} rows, found {len(body)}", line=ln + 1, row=row)
        ln, toks = body[row]
        for col, tok in enumerate(toks):
            if tok not in ("0", "1", "2"):
                raise MapFormatError(f"invalid cell code {tok!r}", line=ln, row=row, col=col)
        if len(toks) != width:
            raise MapFormatError(
                f"expected {width} cells, found {len(toks)}", line=ln, row=row, col=min(len(toks), width)
            )
        cells[row] = [int(t) for t in toks]
    if len(body) > height:
        raise MapFormatError(f"expected {height} rows, found {len(body)}", line=body[height][0], row=height)
    return OccupancyGrid(cells, res, Pose(ox, oy, ophi))


def format_map(grid: OccupancyGrid) -> str:
    o = grid.origin
    out = [
        f"{MAGIC} {FORMAT_VERSION}",
        f"{grid.width} {grid.height} {grid.resolution!r} {o.x!r} {o.y!r} {o.phi!r}",
    ]
    out.extend(" ".join(str(int(v)) for v in row) for row in grid.cells)
    return "\n".join(out) + "\n"


def load_map(path) -> OccupancyGrid:
    return parse_map(Path(path).read_text())


def save_map(grid: OccupancyGrid, path) -> None:
    Path(path).write_text(format_map(grid))


# ---------------------------------------------------------------------------
# ray casting


def raycast_local(grid: OccupancyGrid, lx, ly, angles, max_range):
    """Voxel-walk ray casting from grid-frame origins along grid-frame angles.

    ``lx``, ``ly`` and ``angles`` broadcast against each other. Rays that
    leave the map without hitting anything return ``max_range``.
    """
    lx, ly, angles = np.broadcast_arrays(
        np.asarray(lx, dtype=float), np.asarray(ly, dtype=float), np.asarray(angles, dtype=float)
    )
    shape = angles.shape
    res = grid.resolution
    gx = lx.ravel() / res
    gy = ly.ravel() / res
    dx = np.cos(angles.ravel())
    dy = np.sin(angles.ravel())
    n = gx.size

    ix = np.floor(gx).astype(np.int64)
    iy = np.floor(gy).astype(np.int64)
    inside = (ix >= 0) & (ix < grid.width) & (iy >= 0) & (iy < grid.height)
    if not inside.all():
        raise MapError("ray origin outside the grid")

    occ = grid.occupied
    with np.errstate(divide="ignore", invalid="ignore"):
        step_x = np.where(dx > 0, 1, -1)
        step_y = np.where(dy > 0, 1, -1)
        t_max_x = np.where(dx > 0, (ix + 1 - gx) / dx, np.where(dx < 0, (gx - ix) / -dx, np.inf))
        t_max_y = np.where(dy > 0, (iy + 1 - gy) / dy, np.where(dy < 0, (gy - iy) / -dy, np.inf))
        t_dx = np.where(dx != 0, 1.0 / np.abs(dx), np.inf)
        t_dy = np.where(dy != 0, 1.0 / np.abs(dy), np.inf)

    limit = max_range / res
    dist = np.full(n, float(max_range))
    hit0 = occ[iy, ix]
    dist[hit0] = 0.0
    active = ~hit0
    idx = np.nonzero(active)[0]
    while idx.size:
        tx = t_max_x[idx]
        ty = t_max_y[idx]
        go_x = tx < ty
        t = np.where(go_x, tx, ty)
        ix[idx] += np.where(go_x, step_x[idx], 0)
        iy[idx] += np.where(go_x, 0, step_y[idx])
        t_max_x[idx] = np.where(go_x, tx + t_dx[idx], tx)
        t_max_y[idx] = np.where(go_x, ty, ty + t_dy[idx])

        cx = ix[idx]
        cy = iy[idx]
        out = (cx < 0) | (cx >= grid.width) | (cy < 0) | (cy >= grid.height) | (t >= limit)
        hit = np.zeros(idx.size, dtype=bool)
        ok = ~out
        hit[ok] = occ[cy[ok], cx[ok]]
        dist[idx[hit]] = t[hit] * res
        idx = idx[~(out | hit)]
    np.minimum(dist, max_range, out=dist)
    return dist.reshape(shape)


def raycast(grid: OccupancyGrid, origin: Pose, angle: float, max_range: float) -> float:
    """Distance from ``origin`` along world-frame ``angle`` to the first
    Occupied cell boundary, clamped to ``max_range``."""
    lx, ly = grid.to_local(origin.x, origin.y)
    a = wrap_angle(angle - grid.origin.phi)
    return float(raycast_local(grid, lx, ly, a, max_range))


# ---------------------------------------------------------------------------
# distance transform


class DistanceField:
    """Per-cell Euclidean distance (meters) to the nearest Occupied cell center."""

    def __init__(self, grid: OccupancyGrid, values: np.ndarray):
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self._padded = {}

    @property
    def shape(self):
        return self.values.shape

    def lookup_local(self, lx, ly, outside=np.inf):
        """Nearest-cell lookup at grid-frame coordinates."""
        inv = 1.0 / self.grid.resolution
        h, w = self.values.shape
        col = np.floor(np.asarray(lx) * inv)
        row = np.floor(np.asarray(ly) * inv)
        ok = (row >= 0) & (row < h) & (col >= 0) & (col < w)
        flat = np.where(ok, row * w + col, h * w).astype(np.intp)
        table = self._padded.get(outside)
        if table is None:
            table = self._padded[outside] = np.append(self.values.ravel(), outside)
        return table[flat]

    def lookup(self, x, y, outside=np.inf):
        lx, ly = self.grid.to_local(x, y)
        return self.lookup_local(lx, ly, outside)


def distance_transform(grid: OccupancyGrid) -> DistanceField:
    occ = grid.occupied
    if not occ.any():
        raise MapError("distance field undefined: grid has no Occupied cell")
    # distances in cell units are sqrt of an integer; scaling afterwards keeps them exact
    cells = ndimage.distance_transform_edt(~occ)
    return DistanceField(grid, np.asarray(cells, dtype=float) * grid.resolution)


# ---------------------------------------------------------------------------
# traversability and collision


def _inflation_offsets(resolution, radius):
    """Cell offsets whose square comes closer than ``radius`` to some point
    of the reference cell (square-to-square gap < radius)."""
    m = int(math.ceil(radius / resolution)) + 1
    offs = []
    for di in range(-m, m + 1):
        for dj in range(-m, m + 1):
            gx = max(abs(dj) - 1, 0) * resolution
            gy = max(abs(di) - 1, 0) * resolution
            if gx * gx + gy * gy < radius * radius:
                offs.append((di, dj))
    return offs, m


def traversable_mask(grid: OccupancyGrid, robot_radius=DEFAULT_ROBOT_RADIUS) -> np.ndarray:
    """Free cells where a robot disc centered anywhere in the cell overlaps
    no Occupied cell and stays inside the map."""
    offs, m = _inflation_offsets(grid.resolution, robot_radius)
    blocked = np.pad(grid.occupied, m, constant_values=True)
    h, w = grid.height, grid.width
    hit = np.zeros((h, w), dtype=bool)
    for di, dj in offs:
        hit |= blocked[m + di : m + di + h, m + dj : m + dj + w]
    return (grid.cells == CellCode.FREE) & ~hit


def disc_collides(grid: OccupancyGrid, x, y, radius=DEFAULT_ROBOT_RADIUS) -> bool:
    """True if a disc at world (x, y) overlaps an Occupied cell or leaves the map."""
    lx, ly = grid.to_local(x, y)
    lx = float(lx)
    ly = float(ly)
    w, h = grid.extent
    if lx - radius < 0 or ly - radius < 0 or lx + radius > w or ly + radius > h:
        return True
    res = grid.resolution
    c0 = max(int(math.floor((lx - radius) / res)), 0)
    c1 = min(int(math.floor((lx + radius) / res)), grid.width - 1)
    r0 = max(int(math.floor((ly - radius) / res)), 0)
    r1 = min(int(math.floor((ly + radius) / res)), grid.height - 1)
    window = grid.occupied[r0 : r1 + 1, c0 : c1 + 1]
    if not window.any():
        return False
    rows, cols = np.nonzero(window)
    rows = rows + r0
    cols = cols + c0
    # closest point of each occupied square to the disc center
    px = np.clip(lx, cols * res, (cols + 1) * res)
    py = np.clip(ly, rows * res, (rows + 1) * res)
    d2 = (px - lx) ** 2 + (py - ly) ** 2
    return bool((d2 < radius * radius).any())


def sample_traversable_pose(grid: OccupancyGrid, rng: np.random.Generator, robot_radius=DEFAULT_ROBOT_RADIUS) -> Pose:
    """Uniform pose over traversable cells (uniform inside the cell) with a uniform heading."""
    return Pose.from_array(sample_traversable_poses(grid, rng, 1, robot_radius)[0])


def sample_traversable_poses(grid, rng, n, robot_radius=DEFAULT_ROBOT_RADIUS) -> np.ndarray:
    """Vectorized :func:`sample_traversable_pose`; returns an (n, 3) array."""
    rows, cols = np.nonzero(grid.traversable(robot_radius))
    if rows.size == 0:
        raise MapError("grid has no traversable cell")
    pick = rng.integers(0, rows.size, size=n)
    u = rng.random((n, 3))
    res = grid.resolution
    wx, wy = grid.to_world((cols[pick] + u[:, 0]) * res, (rows[pick] + u[:, 1]) * res)
    phi = wrap_angle(-math.pi + TWO_PI * u[:, 2])
    return np.column_stack([wx, wy, np.atleast_1d(phi)])

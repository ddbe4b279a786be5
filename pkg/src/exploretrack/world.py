"""Ground-truth grid world, progressive map revelation, geodesic distances and frontiers.

Cells are addressed by flat row-major index ``iy * width + ix``; row 0 is the
bottom of the map and cell ``(ix, iy)`` covers
``[ix*res, (ix+1)*res) x [iy*res, (iy+1)*res)`` in metres.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import _kernels

UNKNOWN, FREE, OBSTACLE = 0, 1, 2

PATH_TOL = 1e-9

MAPS_DIR = Path(__file__).parent / "maps"


class InvalidPoseError(ValueError):
    """Pose outside the grid or inside an obstacle."""


class NoPathError(RuntimeError):
    """No known-free path joins the two cells."""


@dataclass
class GridMap:
    truth: np.ndarray  # (H, W) bool, True where obstacle
    knowledge: np.ndarray  # (H, W) int8 in {UNKNOWN, FREE, OBSTACLE}
    resolution: float = 1.0
    los_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def height(self) -> int:
        return self.truth.shape[0]

    @property
    def width(self) -> int:
        return self.truth.shape[1]

    @property
    def shape(self):
        return self.truth.shape

    @property
    def cell_area(self) -> float:
        return self.resolution**2

    @property
    def known_free(self) -> np.ndarray:
        return self.knowledge == FREE

    @property
    def known(self) -> np.ndarray:
        return self.knowledge != UNKNOWN

    def copy(self) -> "GridMap":
        return GridMap(self.truth, self.knowledge.copy(), self.resolution, self.los_cache)

    def with_full_knowledge(self) -> "GridMap":
        know = np.where(self.truth, OBSTACLE, FREE).astype(np.int8)
        return GridMap(self.truth, know, self.resolution, self.los_cache)

    # --- coordinates -------------------------------------------------------
    def in_bounds(self, point) -> bool:
        x, y = point
        return 0.0 <= x < self.width * self.resolution and 0.0 <= y < self.height * self.resolution

    def cell_xy(self, point) -> tuple[int, int]:
        return int(math.floor(point[0] / self.resolution)), int(math.floor(point[1] / self.resolution))

    def cell_of(self, point) -> int:
        ix, iy = self.cell_xy(point)
        return iy * self.width + ix

    def center(self, cell: int) -> np.ndarray:
        iy, ix = divmod(int(cell), self.width)
        return np.array([(ix + 0.5) * self.resolution, (iy + 0.5) * self.resolution])

    def centers(self, cells) -> np.ndarray:
        cells = np.asarray(cells, dtype=np.int64)
        iy, ix = np.divmod(cells, self.width)
        return np.column_stack(((ix + 0.5) * self.resolution, (iy + 0.5) * self.resolution))

    def xy_to_cell(self, ix: int, iy: int) -> int:
        return iy * self.width + ix


@dataclass
class DistanceField:
    dist: np.ndarray  # (H, W) metres, inf where unreachable
    sources: tuple

    def at(self, cell: int) -> float:
        return float(self.dist.flat[cell])


# --- map files ---------------------------------------------------------------

def parse_map(text: str) -> GridMap:
    """Parse the plain-text map format.

    First non-empty line: ``resolution <metres>``. Remaining lines are grid
    rows, top row first, using ``#`` for obstacles and ``.`` for free cells.
    All cells start unknown.
    """
    lines = [ln.rstrip("\n") for ln in text.splitlines()]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ValueError("empty map file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "resolution":
        raise ValueError("line 1: expected 'resolution <metres>' header")
    resolution = float(head[1])
    if resolution <= 0:
        raise ValueError("line 1: resolution must be positive")
    rows = lines[1:]
    width = len(rows[0]) if rows else 0
    grid = np.zeros((len(rows), width), dtype=bool)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"line {r + 2}: row width {len(row)} != {width}")
        bad = set(row) - {"#", "."}
        if bad:
            raise ValueError(f"line {r + 2}: unexpected characters {sorted(bad)}")
        grid[len(rows) - 1 - r] = np.frombuffer(row.encode(), dtype=np.uint8) == ord("#")
    return GridMap(grid, np.zeros(grid.shape, dtype=np.int8), resolution)


def load_map(path) -> GridMap:
    path = Path(path)
    if not path.exists() and (MAPS_DIR / path).exists():
        path = MAPS_DIR / path
    return parse_map(path.read_text())


def format_map(grid_map: GridMap) -> str:
    rows = [f"resolution {grid_map.resolution:g}"]
    for iy in range(grid_map.height - 1, -1, -1):
        rows.append("".join("#" if v else "." for v in grid_map.truth[iy]))
    return "\n".join(rows) + "\n"


# --- line of sight -----------------------------------------------------------

# rays aim at the cell centre and at points just inside each face (1/100 cell units)
_SAMPLES = ((0, 0), (49, 0), (-49, 0), (0, 49), (0, -49))


def _touched(dx: int, dy: int, sx: int = 0, sy: int = 0) -> list[tuple[int, int]]:
    """Cells whose closed unit square meets the segment from the origin centre to
    ``(dx + sx/100, dy + sy/100)``; the origin and target cells are excluded."""
    px, py = 100 * dx + sx, 100 * dy + sy
    out = []
    for a in range(min(0, dx) - 1, max(0, dx) + 2):
        if 100 * a + 50 < min(0, px) or 100 * a - 50 > max(0, px):
            continue
        for b in range(min(0, dy) - 1, max(0, dy) + 2):
            if (a, b) in ((0, 0), (dx, dy)):
                continue
            if 100 * b + 50 < min(0, py) or 100 * b - 50 > max(0, py):
                continue
            sides = [px * (100 * b + cy) - py * (100 * a + cx) for cx in (-50, 50) for cy in (-50, 50)]
            if min(sides) <= 0 <= max(sides):
                out.append((a, b))
    return out


@lru_cache(maxsize=16)
def ray_table(radius_cells: float):
    """Offsets within ``radius_cells`` and, per offset and sample point, the
    padded list of intermediate cells the ray touches."""
    r = int(math.floor(radius_cells + 1e-9))
    offsets = []
    rays = []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dx * dx + dy * dy <= radius_cells**2 + 1e-9:
                offsets.append((dx, dy))
                rays.append([_touched(dx, dy, sx, sy) for sx, sy in _SAMPLES])
    longest = max(1, max(len(t) for per in rays for t in per))
    shape = (len(offsets), len(_SAMPLES), longest)
    rdx = np.zeros(shape, dtype=np.int64)
    rdy = np.zeros(shape, dtype=np.int64)
    for k, per in enumerate(rays):
        for s, cells in enumerate(per):
            for j, (a, b) in enumerate(cells):
                rdx[k, s, j] = a
                rdy[k, s, j] = b
    off = np.array(offsets, dtype=np.int64)
    return off[:, 0], off[:, 1], rdx, rdy, r


def visible_cells(blocked: np.ndarray, origin: int, radius_cells: float) -> np.ndarray:
    """Flat indices of cells in line of sight from the centre of ``origin``.

    A cell is visible when a ray to its centre, or to a point just inside one
    of its faces, touches no blocked *intermediate* cell. The target itself
    may be blocked, so walls facing the sensor are seen.
    """
    h, w = blocked.shape
    dx, dy, rdx, rdy, r = ray_table(float(radius_cells))
    padded = np.ones((h + 2 * r, w + 2 * r), dtype=bool)
    padded[r:r + h, r:r + w] = blocked
    oy, ox = divmod(int(origin), w)
    clear = (~padded[oy + r + rdy, ox + r + rdx].any(axis=2)).any(axis=1)
    tx = ox + dx
    ty = oy + dy
    ok = clear & (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    return np.sort(ty[ok] * w + tx[ok])


def line_of_sight(grid_map: GridMap, cell: int, sensor_range: float) -> np.ndarray:
    """Truth line of sight from ``cell`` (walls included), memoised per map."""
    key = (int(cell), float(sensor_range))
    seen = grid_map.los_cache.get(key)
    if seen is None:
        seen = visible_cells(grid_map.truth, cell, sensor_range / grid_map.resolution)
        seen = seen.astype(np.int64)
        grid_map.los_cache[key] = seen
    return seen


def reveal(grid_map: GridMap, pose, sensor_range: float) -> GridMap:
    """Return a copy of ``grid_map`` with every cell in line of sight of ``pose``
    (within ``sensor_range``) set to its true state. Rays start at the centre of
    the pose's cell."""
    if not grid_map.in_bounds(pose):
        raise InvalidPoseError(f"pose {tuple(pose)} outside grid")
    cell = grid_map.cell_of(pose)
    if grid_map.truth.flat[cell]:
        raise InvalidPoseError(f"pose {tuple(pose)} inside obstacle")
    out = grid_map.copy()
    seen = line_of_sight(grid_map, cell, sensor_range)
    out.knowledge.flat[seen] = np.where(grid_map.truth.flat[seen], OBSTACLE, FREE)
    return out


def frontiers(grid_map: GridMap) -> np.ndarray:
    """Known-free cells with at least one unknown 4-neighbour (sorted flat indices)."""
    unknown = grid_map.knowledge == UNKNOWN
    near = np.zeros_like(unknown)
    near[1:, :] |= unknown[:-1, :]
    near[:-1, :] |= unknown[1:, :]
    near[:, 1:] |= unknown[:, :-1]
    near[:, :-1] |= unknown[:, 1:]
    return np.flatnonzero(grid_map.known_free & near)


# --- geodesics ---------------------------------------------------------------

def _free_flat(grid_map: GridMap) -> np.ndarray:
    return np.ascontiguousarray(grid_map.known_free.ravel())


def geodesic_field(grid_map: GridMap, sources) -> DistanceField:
    """Shortest known-free path length from the nearest source to every cell."""
    src = np.unique(np.atleast_1d(np.asarray(sources, dtype=np.int64)))
    if src.size == 0:
        raise ValueError("geodesic_field needs at least one source")
    free = _free_flat(grid_map)
    if not free[src].all():
        raise ValueError("sources must be known-free cells")
    dist = _kernels.dijkstra(free, grid_map.width, grid_map.height, src,
                             grid_map.resolution, np.zeros(1, dtype=np.bool_), 0)
    return DistanceField(dist.reshape(grid_map.shape), tuple(int(s) for s in src))


def robot_fields(grid_map: GridMap, cells) -> np.ndarray:
    """Stacked single-source fields, shape (n, H*W)."""
    src = np.asarray(cells, dtype=np.int64)
    return _kernels.fields(_free_flat(grid_map), grid_map.width, grid_map.height,
                           src, grid_map.resolution)


def path_from_field(grid_map: GridMap, dist, target: int) -> list[int]:
    dist = np.asarray(dist).ravel()
    if not np.isfinite(dist[target]):
        raise NoPathError(f"cell {target} unreachable")
    path = _kernels.backtrack(_free_flat(grid_map), grid_map.width, grid_map.height,
                              dist, int(target), grid_map.resolution, PATH_TOL)
    return [int(c) for c in path]


def shortest_path(grid_map: GridMap, a: int, b: int) -> list[int]:
    field = geodesic_field(grid_map, [a])
    return path_from_field(grid_map, field.dist, b)


def path_length(grid_map: GridMap, path) -> float:
    pts = grid_map.centers(path)
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def reachable_free(grid_map: GridMap, start_cells) -> np.ndarray:
    """Truth-free cells connected (4-neighbour) to ``start_cells``, as an (H, W) mask."""
    full = grid_map.with_full_knowledge()
    field = geodesic_field(full, start_cells)
    return np.isfinite(field.dist)

"""Per-robot temporary goals (explore / cover / track) and the mode switch."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels
from .partition import Partition
from .phd import PhdGrid
from .world import GridMap, frontiers, geodesic_field

TIE_TOL = 1e-12
STRATEGIES = ("full", "coverage-only", "tracking-only")


class Mode(str, Enum):
    EXPLORE = "explore"
    COVER = "cover"
    TRACK = "track"


@dataclass
class BetaMessage:
    """What a robot broadcasts to its neighbours each step."""
    sender: int
    position: tuple
    beta: float


@dataclass
class GoalDecision:
    mode: Mode
    goal: np.ndarray
    beta: float
    local_frontier: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def local_frontier(partition: Partition, grid_map: GridMap, i: int, front=None) -> np.ndarray:
    if front is None:
        front = frontiers(grid_map)
    return front[partition.owner.flat[front] == i]


def frontier_density(q, points, h_x: float, h_y: float) -> float:
    """Gaussian KDE of the frontier points (rows of ``points``) evaluated at ``q``."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) == 0:
        raise ValueError("frontier density needs at least one frontier point")
    return float(_kde(np.asarray(q, dtype=float).reshape(1, 2), points, h_x, h_y)[0])


def _kde(queries: np.ndarray, points: np.ndarray, h_x: float, h_y: float,
         chunk: int = 2048) -> np.ndarray:
    out = np.empty(len(queries))
    # separable kernel: exp(a + b) = exp(a) * exp(b)
    for s in range(0, len(queries), chunk):
        qx = queries[s:s + chunk, 0:1]
        qy = queries[s:s + chunk, 1:2]
        ex = np.exp(-((qx - points[:, 0]) ** 2) / (2.0 * h_x**2))
        ey = np.exp(-((qy - points[:, 1]) ** 2) / (2.0 * h_y**2))
        out[s:s + chunk] = (ex * ey).sum(axis=1)
    return out / (len(points) * 2.0 * math.pi * h_x * h_y)


def _first_max(values: np.ndarray) -> int:
    top = values.max()
    return int(np.flatnonzero(values >= top - TIE_TOL * max(abs(top), 1e-300))[0])


def exploration_goal(partition: Partition, grid_map: GridMap, i: int, h_x: float, h_y: float,
                     local=None) -> np.ndarray:
    """Centre of the owned cell with the highest frontier density."""
    if local is None:
        local = local_frontier(partition, grid_map, i)
    cells = partition.cells(i)
    dens = _kde(grid_map.centers(cells), grid_map.centers(local), h_x, h_y)
    return grid_map.center(cells[_first_max(dens)])


def coverage_goal(partition: Partition, grid_map: GridMap, i: int) -> np.ndarray:
    """Geodesic 1-center of the power cell."""
    cells = partition.cells(i)
    if cells.size == 0:
        raise ValueError(f"robot {i} owns no cells")
    free = np.ascontiguousarray(grid_map.known_free.ravel())
    best, _ = _kernels.one_center(free, grid_map.width, grid_map.height, cells,
                                  grid_map.resolution, 1e-9)
    return grid_map.center(best)


def tracking_goal(partition: Partition, phd: PhdGrid, grid_map: GridMap, i: int) -> np.ndarray:
    """PHD-weighted centroid of the power cell, pulled back inside when it lands outside."""
    cells = partition.cells(i)
    if cells.size == 0:
        raise ValueError(f"robot {i} owns no cells")
    w = phd.intensity.flat[cells]
    total = w.sum()
    if total <= 0:
        return coverage_goal(partition, grid_map, i)
    centers = grid_map.centers(cells)
    g = (w[:, None] * centers).sum(axis=0) / total
    if grid_map.in_bounds(g) and partition.owner.flat[grid_map.cell_of(g)] == i:
        return g
    d2 = ((centers - g) ** 2).sum(axis=1)
    return centers[int(np.argmin(d2))]


def relay_beta(dist_i: np.ndarray, grid_map: GridMap, messages) -> float:
    """Upper bound on frontier distance through neighbours' reported betas."""
    best = math.inf
    for msg in messages:
        d = dist_i.flat[grid_map.cell_of(msg.position)]
        best = min(best, d + msg.beta)
    return best


def select(i: int, partition: Partition, grid_map: GridMap, phd: PhdGrid, messages,
           d_f: float, pose, h_x: float = 5.0, h_y: float = 5.0, dist_i=None,
           front=None, strategy: str = "full") -> GoalDecision:
    """One robot's mode and temporary goal for this step.

    ``messages`` are the neighbours' previous broadcasts; ``dist_i`` is the
    robot's own geodesic field (computed when omitted).
    """
    if dist_i is None:
        dist_i = geodesic_field(grid_map, [grid_map.cell_of(pose)]).dist
    dist_i = np.asarray(dist_i)
    if front is None:
        front = frontiers(grid_map)
    local = local_frontier(partition, grid_map, i, front)
    owns = bool((partition.owner == i).any())
    if local.size:
        beta = float(dist_i.flat[local].min())
    else:
        beta = relay_beta(dist_i, grid_map, messages)

    if strategy == "full":
        if local.size:
            mode = Mode.EXPLORE
        elif beta > d_f:
            mode = Mode.TRACK
        else:
            mode = Mode.COVER
    elif strategy == "coverage-only":
        mode = Mode.COVER
    elif strategy == "tracking-only":
        mode = Mode.TRACK
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    if not owns:
        goal = np.asarray(pose, dtype=float)
    elif mode is Mode.EXPLORE:
        goal = exploration_goal(partition, grid_map, i, h_x, h_y, local)
    elif mode is Mode.TRACK:
        goal = tracking_goal(partition, phd, grid_map, i)
    else:
        goal = coverage_goal(partition, grid_map, i)
    return GoalDecision(mode, np.asarray(goal, dtype=float), beta, local)

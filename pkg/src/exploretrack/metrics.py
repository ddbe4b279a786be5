"""Tracking and exploration metrics: OSPA, PHD peak extraction, explored fraction."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment

from .phd import PhdGrid
from .world import GridMap, UNKNOWN, reachable_free


@dataclass
class OspaParams:
    c: float = 10.0
    p: float = 1.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("OSPA cutoff c must be positive")
        if self.p < 1:
            raise ValueError("OSPA order p must be >= 1")


@dataclass
class MetricsRecord:
    t: float
    ospa: float
    explored: float
    cost: float
    n_estimated: int
    phd_mass: float
    n_explore: int
    n_cover: int
    n_track: int

    def row(self) -> dict:
        return asdict(self)


def ospa(X, Y, params: OspaParams | None = None) -> float:
    """Optimal subpattern assignment distance between two finite point sets."""
    params = params or OspaParams()
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    Y = np.asarray(Y, dtype=float).reshape(-1, 2)
    if len(X) > len(Y):
        X, Y = Y, X
    m, k = len(X), len(Y)
    if k == 0:
        return 0.0
    c, p = params.c, params.p
    if m == 0:
        return float(c)
    d = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2)
    cost = np.minimum(d, c) ** p
    rows, cols = linear_sum_assignment(cost)
    total = cost[rows, cols].sum() + c**p * (k - m)
    return float((total / k) ** (1.0 / p))


def extract_targets(phd: PhdGrid, radius: float = 2.0) -> np.ndarray:
    """Up to round(total mass) intensity peaks, greedily suppressed within ``radius``."""
    k = int(round(phd.mass()))
    if k <= 0:
        return np.zeros((0, 2))
    nu = phd.intensity
    peaks = (nu > 0) & (nu >= ndimage.maximum_filter(nu, size=3, mode="constant", cval=0.0))
    idx = np.flatnonzero(peaks)
    # descending intensity, ascending index on ties
    order = idx[np.lexsort((idx, -nu.flat[idx]))]
    w = nu.shape[1]
    iy, ix = np.divmod(order, w)
    pts = np.column_stack(((ix + 0.5) * phd.resolution, (iy + 0.5) * phd.resolution))
    chosen: list[np.ndarray] = []
    r2 = radius * radius
    for pt in pts:
        if all(((pt - c) ** 2).sum() > r2 for c in chosen):
            chosen.append(pt)
            if len(chosen) == k:
                break
    return np.array(chosen).reshape(-1, 2)


def exploration_scope(grid_map: GridMap, spawn_cells) -> np.ndarray:
    """Cells that can ever be revealed: truth-free cells reachable from the spawn
    plus the obstacle cells bordering them (4-neighbour)."""
    free = reachable_free(grid_map, spawn_cells)
    near = np.zeros_like(free)
    near[1:, :] |= free[:-1, :]
    near[:-1, :] |= free[1:, :]
    near[:, 1:] |= free[:, :-1]
    near[:, :-1] |= free[:, 1:]
    return free | (near & grid_map.truth)


def explored_fraction(grid_map: GridMap, scope: np.ndarray) -> float:
    total = int(scope.sum())
    if total == 0:
        return 1.0
    return float(((grid_map.knowledge != UNKNOWN) & scope).sum() / total)


def smooth(series, window: int) -> np.ndarray:
    """Centered moving average over ``window`` samples, shrinking at the ends."""
    x = np.asarray(series, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1 sample")
    if x.size == 0:
        return x
    left, right = (window - 1) // 2, window // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    i = np.arange(x.size)
    lo = np.maximum(i - left, 0)
    hi = np.minimum(i + right + 1, x.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def time_to_threshold(times, values, fraction: float = 0.5):
    """First time ``values`` drops below ``fraction`` of its first sample, else None."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return None
    below = np.flatnonzero(values < fraction * values[0])
    return float(np.asarray(times)[below[0]]) if below.size else None

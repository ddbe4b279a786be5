"""NUSC power radii and geodesic power-diagram partitioning of known-free space."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .phd import PhdGrid, SensorModel, fov_cells
from .world import GridMap, robot_fields

log = logging.getLogger(__name__)

WEIGHT_VARIANTS = ("signed", "squared")


@dataclass
class Partition:
    owner: np.ndarray  # (H, W) robot id, -1 where unowned
    n_robots: int
    adjacency: np.ndarray  # (n, n) bool, symmetric

    def cells(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.owner.ravel() == i)

    def mask(self, i: int) -> np.ndarray:
        return self.owner == i

    def neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency[i])]

    def to_csv(self, path) -> Path:
        """Owner ids as a CSV matrix, top row first so it reads like the map."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, self.owner[::-1], fmt="%d", delimiter=",")
        return path


@dataclass
class NuscWeights:
    c_max: np.ndarray
    c_exp: np.ndarray
    u: np.ndarray


def nusc(phd: PhdGrid, model: SensorModel, grid_map: GridMap, q, mu: float, fov=None):
    """Return ``(c_max, c_exp, u)`` for a robot at ``q``.

    c_max is mu times the peak detection-weighted intensity in the field of
    view, c_exp the detection-weighted share of the expected target count
    there (0 when the view holds no mass), and u their difference.
    """
    if fov is None:
        fov = fov_cells(model, grid_map, q)
    if fov.size == 0:
        log.debug("empty field of view at %s; NUSC set to 0", tuple(q))
        return 0.0, 0.0, 0.0
    nu = phd.intensity.flat[fov]
    pd = np.full(fov.size, model.p_detect)
    c_max = float(mu * (pd * nu).max())
    total = nu.sum() * phd.area
    c_exp = float((pd * nu).sum() * phd.area / total) if total > 0 else 0.0
    return c_max, c_exp, c_max - c_exp


def power_weight(radii, variant: str = "signed") -> np.ndarray:
    """Term subtracted from squared distance: U*|U| (signed) or U**2 (squared)."""
    radii = np.asarray(radii, dtype=float)
    if variant == "signed":
        return radii * np.abs(radii)
    if variant == "squared":
        return radii**2
    raise ValueError(f"unknown weight variant {variant!r}")


def adjacency_from_owner(owner: np.ndarray, n: int) -> np.ndarray:
    adj = np.zeros((n, n), dtype=bool)
    for a, b in ((owner[:, :-1], owner[:, 1:]), (owner[:-1, :], owner[1:, :])):
        hit = (a != b) & (a >= 0) & (b >= 0)
        adj[a[hit], b[hit]] = True
    adj |= adj.T
    return adj


def power_partition(grid_map: GridMap, poses, radii, variant: str = "signed",
                    fields=None) -> Partition:
    """Assign every known-free cell to the robot minimising d_E^2 - w(U).

    ``fields`` may carry precomputed per-robot distance fields (n, H*W).
    Cells no robot can reach stay unowned (-1); ties go to the lower id.
    """
    poses = np.asarray(poses, dtype=float).reshape(-1, 2)
    n = len(poses)
    if n == 0 or len(radii) != n:
        raise ValueError("need one radius per robot and at least one robot")
    if fields is None:
        fields = robot_fields(grid_map, [grid_map.cell_of(p) for p in poses])
    cost = fields**2 - power_weight(radii, variant)[:, None]
    cost[~np.isfinite(fields)] = np.inf
    owner = np.argmin(cost, axis=0)
    owner[~np.isfinite(cost.min(axis=0))] = -1
    owner = owner.reshape(grid_map.shape)
    return Partition(owner, n, adjacency_from_owner(owner, n))


def locational_cost(partition: Partition, poses, radii, density, grid_map: GridMap,
                    variant: str = "signed", fields=None) -> float:
    """Sum over robots and owned cells of (d_E^2 - w(U)) * density * cell area.

    ``density`` is a :class:`PhdGrid` or a scalar (uniform over known-free).
    """
    if fields is None:
        fields = robot_fields(grid_map, [grid_map.cell_of(p) for p in poses])
    if isinstance(density, PhdGrid):
        phi = density.intensity.ravel()
    else:
        phi = np.where(grid_map.known_free.ravel(), float(density), 0.0)
    w = power_weight(radii, variant)
    owner = partition.owner.ravel()
    total = 0.0
    for i in range(partition.n_robots):
        sel = owner == i
        if not sel.any():
            continue
        total += float(((fields[i, sel] ** 2 - w[i]) * phi[sel]).sum())
    return total * grid_map.cell_area

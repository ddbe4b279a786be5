"""Grid-discretised PHD filter: prediction, detection-probability model and update."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .world import GridMap, line_of_sight

log = logging.getLogger(__name__)


@dataclass
class SensorModel:
    range: float = 12.0
    p_detect: float = 0.8
    meas_std: float = 0.5
    clutter_rate: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.p_detect <= 1.0:
            raise ValueError("p_detect must lie in [0, 1]")
        if self.meas_std <= 0:
            raise ValueError("meas_std must be positive")
        if self.clutter_rate < 0:
            raise ValueError("clutter_rate must be nonnegative")
        if self.range <= 0:
            raise ValueError("range must be positive")


@dataclass
class PhdGrid:
    intensity: np.ndarray  # (H, W) targets per m^2
    resolution: float = 1.0

    @property
    def area(self) -> float:
        return self.resolution**2

    @property
    def shape(self):
        return self.intensity.shape

    def mass(self) -> float:
        return float(self.intensity.sum() * self.area)

    def copy(self) -> "PhdGrid":
        return PhdGrid(self.intensity.copy(), self.resolution)


def uniform_phd(grid_map: GridMap, intensity: float) -> PhdGrid:
    return PhdGrid(np.where(grid_map.known_free, float(intensity), 0.0), grid_map.resolution)


def uniform_birth(grid_map: GridMap, total_mass: float) -> PhdGrid:
    """Birth intensity spread evenly over known-free cells."""
    free = grid_map.known_free
    n = int(free.sum())
    if n == 0 or total_mass <= 0:
        return PhdGrid(np.zeros(grid_map.shape), grid_map.resolution)
    return uniform_phd(grid_map, total_mass / (n * grid_map.cell_area))


def motion_kernel(motion_std: float, resolution: float) -> np.ndarray:
    """Normalised discrete Gaussian over cell offsets, truncated at 4 sigma."""
    if motion_std <= 0:
        return np.ones((1, 1))
    r = max(1, int(math.ceil(4.0 * motion_std / resolution)))
    off = np.arange(-r, r + 1) * resolution
    k = np.exp(-(off[:, None] ** 2 + off[None, :] ** 2) / (2.0 * motion_std**2))
    return k / k.sum()


def predict(phd: PhdGrid, motion_std: float, p_survive: float, birth: PhdGrid,
            grid_map: GridMap | None = None) -> PhdGrid:
    """Random-walk prediction with survival and birth.

    Mass leaving a source cell is spread by a Gaussian kernel, restricted to
    known-free cells of ``grid_map`` (every cell when no map is given) and
    renormalised per source so nothing is lost to walls.
    """
    if motion_std < 0:
        raise ValueError("motion_std must be nonnegative")
    if not 0.0 <= p_survive <= 1.0:
        raise ValueError("p_survive must lie in [0, 1]")
    if birth.shape != phd.shape:
        raise ValueError(f"birth shape {birth.shape} != phd shape {phd.shape}")
    if grid_map is not None and grid_map.shape != phd.shape:
        raise ValueError(f"map shape {grid_map.shape} != phd shape {phd.shape}")
    mask = np.ones(phd.shape) if grid_map is None else grid_map.known_free.astype(float)
    src = p_survive * phd.intensity * mask
    kernel = motion_kernel(motion_std, phd.resolution)
    if kernel.size == 1:
        moved = src
    else:
        keep = ndimage.correlate(mask, kernel, mode="constant", cval=0.0)
        norm = np.divide(src, keep, out=np.zeros_like(src), where=keep > 0)
        moved = mask * ndimage.correlate(norm, kernel, mode="constant", cval=0.0)
    return PhdGrid(moved + birth.intensity, phd.resolution)


def fov_cells(model: SensorModel, grid_map: GridMap, q) -> np.ndarray:
    """Known-free cells with nonzero detection probability from ``q``.

    Rays start at the centre of q's cell and are stopped by true obstacles,
    the same geometry that reveals the map.
    """
    origin = grid_map.cell_of(q)
    if not grid_map.known_free.flat[origin]:
        return np.zeros(0, dtype=np.int64)
    seen = line_of_sight(grid_map, origin, model.range)
    return seen[grid_map.known_free.flat[seen]]


def detection_probability(model: SensorModel, grid_map: GridMap, q, x: int) -> float:
    fov = fov_cells(model, grid_map, q)
    i = np.searchsorted(fov, x)
    return model.p_detect if i < fov.size and fov[i] == x else 0.0


def likelihood(z, centers: np.ndarray, meas_std: float) -> np.ndarray:
    """Isotropic Gaussian measurement density g(z | x) at each row of ``centers``."""
    d2 = ((centers - np.asarray(z, dtype=float)) ** 2).sum(axis=1)
    return np.exp(-d2 / (2.0 * meas_std**2)) / (2.0 * math.pi * meas_std**2)


def update(phd: PhdGrid, model: SensorModel, grid_map: GridMap, q, measurements,
           region=None, fov=None) -> PhdGrid:
    """Single-sensor PHD corrector for a sensor at ``q``.

    ``region`` (flat indices or (H, W) mask) restricts which cells are written;
    ``fov`` lets callers pass a precomputed :func:`fov_cells` result.
    Measurements outside the grid are dropped (logged at debug level; the
    simulator keeps a running count).
    """
    if fov is None:
        fov = fov_cells(model, grid_map, q)
    out = phd.copy()
    if fov.size == 0:
        return out
    # eta is normalised over the whole footprint; only ``region`` is written so
    # neighbouring cells never both claim the same detection
    write = np.ones(fov.size, dtype=bool)
    if region is not None:
        region = np.asarray(region)
        if region.dtype == bool:
            write = region.ravel()[fov]
        else:
            write = np.isin(fov, region)
    if not write.any():
        return out
    area = phd.area
    prior = phd.intensity.flat[fov]
    pd = model.p_detect
    centers = grid_map.centers(fov)
    kappa = model.clutter_rate / (fov.size * area)
    post = (1.0 - pd) * prior
    ignored = 0
    for z in measurements:
        if not grid_map.in_bounds(z):
            ignored += 1
            continue
        num = pd * likelihood(z, centers, model.meas_std) * prior
        eta = kappa + num.sum() * area
        if eta > 0:
            post = post + num / eta
    if ignored:
        log.debug("ignored %d measurement(s) outside the grid", ignored)
    out.intensity.flat[fov[write]] = post[write]
    return out


def expected_count(phd: PhdGrid, region) -> float:
    region = np.asarray(region)
    if region.dtype == bool:
        return float(phd.intensity[region.reshape(phd.shape)].sum() * phd.area)
    return float(phd.intensity.flat[region].sum() * phd.area)

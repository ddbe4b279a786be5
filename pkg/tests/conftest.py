import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.sparse import lil_matrix
from scipy.sparse.csgraph import dijkstra as csgraph_dijkstra

from exploretrack.world import FREE, OBSTACLE, UNKNOWN, GridMap

settings.register_profile("ci", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


def make_map(rows, known=True, resolution=1.0) -> GridMap:
    """GridMap from strings written top row first ('#' obstacle, '.' free)."""
    truth = np.array([[ch == "#" for ch in row] for row in rows[::-1]], dtype=bool)
    if known:
        know = np.where(truth, OBSTACLE, FREE).astype(np.int8)
    else:
        know = np.full(truth.shape, UNKNOWN, dtype=np.int8)
    return GridMap(truth, know, resolution)


def open_map(w, h, known=True) -> GridMap:
    return make_map(["." * w] * h, known)


def random_map(rng, w, h, p_obstacle=0.25, known=True) -> GridMap:
    truth = rng.random((h, w)) < p_obstacle
    know = np.where(truth, OBSTACLE, FREE).astype(np.int8) if known \
        else np.full(truth.shape, UNKNOWN, dtype=np.int8)
    return GridMap(truth, know, 1.0)


def csgraph_field(grid: GridMap, source: int) -> np.ndarray:
    """Independent 8-connected, no-corner-cutting graph solved by scipy."""
    h, w = grid.shape
    free = grid.known_free
    g = lil_matrix((h * w, h * w))
    for iy in range(h):
        for ix in range(w):
            if not free[iy, ix]:
                continue
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    if dx == dy == 0:
                        continue
                    jx, jy = ix + dx, iy + dy
                    if not (0 <= jx < w and 0 <= jy < h) or not free[jy, jx]:
                        continue
                    if dx and dy and not (free[iy, jx] and free[jy, ix]):
                        continue
                    g[iy * w + ix, jy * w + jx] = grid.resolution * (math.sqrt(2) if dx and dy else 1.0)
    return csgraph_dijkstra(g.tocsr(), indices=source)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting -------------------------------------------------------

_CRITERIA: dict = {}


def report_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    _CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])

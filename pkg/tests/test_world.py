import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from exploretrack import world as W
from exploretrack.world import (FREE, OBSTACLE, UNKNOWN, GridMap, InvalidPoseError, NoPathError,
                                frontiers, geodesic_field, parse_map, path_length, reveal,
                                shortest_path)

from conftest import csgraph_field, make_map, open_map, random_map


# --- oracles -----------------------------------------------------------------

def octile(a, b, res=1.0):
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return res * (max(dx, dy) - min(dx, dy) + math.sqrt(2) * min(dx, dy))


def touches(x0, y0, x1, y1, cx, cy):
    """Liang-Barsky clip of segment against the closed unit square centred at (cx, cy)."""
    lo, hi = Fraction(0), Fraction(1)
    for p, q in ((-(x1 - x0), x0 - (cx - Fraction(1, 2))), (x1 - x0, (cx + Fraction(1, 2)) - x0),
                 (-(y1 - y0), y0 - (cy - Fraction(1, 2))), (y1 - y0, (cy + Fraction(1, 2)) - y0)):
        if p == 0:
            if q < 0:
                return False
            continue
        r = q / p
        if p < 0:
            lo = max(lo, r)
        else:
            hi = min(hi, r)
    return lo <= hi


SAMPLES = [(0, 0), (Fraction(49, 100), 0), (-Fraction(49, 100), 0), (0, Fraction(49, 100)),
           (0, -Fraction(49, 100))]


def brute_visible(blocked, origin, radius):
    h, w = blocked.shape
    oy, ox = divmod(origin, w)
    out = []
    for ty in range(h):
        for tx in range(w):
            dx, dy = tx - ox, ty - oy
            if dx * dx + dy * dy > radius * radius:
                continue
            for sx, sy in SAMPLES:
                ex, ey = dx + sx, dy + sy
                clear = True
                for cy in range(min(0, dy) - 1, max(0, dy) + 2):
                    for cx in range(min(0, dx) - 1, max(0, dx) + 2):
                        if (cx, cy) in ((0, 0), (dx, dy)):
                            continue
                        gx, gy = ox + cx, oy + cy
                        outside = not (0 <= gx < w and 0 <= gy < h)
                        if (outside or blocked[gy, gx]) and touches(0, 0, ex, ey, cx, cy):
                            clear = False
                            break
                    if not clear:
                        break
                if clear:
                    out.append(ty * w + tx)
                    break
    return np.array(sorted(out), dtype=np.int64)


def brute_frontiers(grid):
    h, w = grid.shape
    out = []
    for iy in range(h):
        for ix in range(w):
            if grid.knowledge[iy, ix] != FREE:
                continue
            for jx, jy in ((ix + 1, iy), (ix - 1, iy), (ix, iy + 1), (ix, iy - 1)):
                if 0 <= jx < w and 0 <= jy < h and grid.knowledge[jy, jx] == UNKNOWN:
                    out.append(iy * w + ix)
                    break
    return np.array(out, dtype=np.int64)


# --- map files -----------------------------------------------------------------

def test_parse_map_orientation_and_resolution():
    g = parse_map("resolution 0.5\n#..\n...\n")
    assert g.shape == (2, 3)
    assert g.resolution == 0.5
    # the first text row is the top of the map
    assert g.truth[1, 0] and not g.truth[0, 0]
    assert (g.knowledge == UNKNOWN).all()


@pytest.mark.parametrize("text, line", [
    ("", None),
    ("res 1\n..\n", 1),
    ("resolution 1\n...\n..\n", 3),
    ("resolution 1\n.x.\n", 2),
])
def test_parse_map_errors(text, line):
    with pytest.raises(ValueError) as exc:
        parse_map(text)
    if line is not None:
        assert f"line {line}" in str(exc.value)


def test_format_map_round_trip():
    g = make_map(["#..#", "....", ".##."], known=False)
    back = parse_map(W.format_map(g))
    assert np.array_equal(back.truth, g.truth)


def test_bundled_maps_load():
    six = W.load_map("six_room.txt")
    assert six.shape == (100, 100) and six.resolution == 1.0
    three = W.load_map("three_room.txt")
    assert three.shape == (50, 50)


# --- reveal / line of sight ---------------------------------------------------------

def test_reveal_open_map_covers_everything():
    g = open_map(10, 10, known=False)
    out = reveal(g, (5.5, 5.5), 20.0)
    assert (out.knowledge == FREE).all()
    assert (g.knowledge == UNKNOWN).all()  # input untouched


def test_reveal_does_not_see_behind_wall():
    rows = ["..........",
            "..........",
            "..........",
            "##########",
            "..........",
            ".........."]
    g = make_map(rows, known=False)
    out = reveal(g, (4.5, 0.5), 20.0)
    # text rows are top-first, so the wall is row iy = 2
    assert (out.knowledge[2] == OBSTACLE).all()
    assert (out.knowledge[:2] == FREE).all()
    assert (out.knowledge[3:] == UNKNOWN).all()


def test_reveal_idempotent_and_truthful(rng):
    for _ in range(5):
        g = random_map(rng, 15, 12, 0.2, known=False)
        free = np.flatnonzero(~g.truth)
        pose = g.center(free[rng.integers(free.size)])
        once = reveal(g, pose, 6.0)
        twice = reveal(once, pose, 6.0)
        assert np.array_equal(once.knowledge, twice.knowledge)
        known = once.knowledge != UNKNOWN
        assert np.array_equal(once.knowledge[known] == OBSTACLE, g.truth[known])


def test_reveal_invalid_pose():
    g = make_map(["..", ".#"], known=False)
    with pytest.raises(InvalidPoseError):
        reveal(g, (1.5, 0.5), 3.0)  # bottom-right cell is the obstacle
    with pytest.raises(InvalidPoseError):
        reveal(g, (-0.5, 0.5), 3.0)


def test_visible_cells_match_exact_oracle(rng):
    for _ in range(6):
        blocked = rng.random((11, 11)) < 0.3
        blocked[5, 5] = False
        radius = float(rng.integers(2, 6))
        got = W.visible_cells(blocked, 5 * 11 + 5, radius)
        want = brute_visible(blocked, 5 * 11 + 5, radius)
        assert np.array_equal(got, want)


def test_line_of_sight_is_memoised_across_copies():
    g = open_map(8, 8)
    a = W.line_of_sight(g, 10, 4.0)
    b = W.line_of_sight(g.copy(), 10, 4.0)
    assert a is b


@given(st.integers(0, 2**32 - 1))
def test_knowledge_monotone_over_reveals(seed):
    rng = np.random.default_rng(seed)
    g = random_map(rng, 12, 10, 0.2, known=False)
    free = np.flatnonzero(~g.truth)
    if free.size == 0:
        return
    known = 0
    for c in rng.choice(free, size=min(4, free.size), replace=False):
        g = reveal(g, g.center(c), 4.0)
        now = int((g.knowledge != UNKNOWN).sum())
        assert now >= known
        known = now


# --- frontiers ------------------------------------------------------------------

def test_frontiers_fully_known_is_empty():
    assert frontiers(open_map(6, 6)).size == 0


def test_frontier_single_known_cell():
    g = open_map(5, 5, known=False)
    g.knowledge[2, 2] = FREE
    assert frontiers(g).tolist() == [12]


@given(st.integers(0, 2**32 - 1))
def test_frontiers_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(1, 12, size=2)
    know = rng.integers(0, 3, size=(h, w)).astype(np.int8)
    g = GridMap(know == OBSTACLE, know, 1.0)
    assert np.array_equal(frontiers(g), brute_frontiers(g))


# --- geodesics -------------------------------------------------------------------

def test_open_map_field_is_octile():
    g = open_map(13, 9)
    src = g.xy_to_cell(4, 3)
    field = geodesic_field(g, [src]).dist
    for iy in range(9):
        for ix in range(13):
            assert field[iy, ix] == pytest.approx(octile((ix, iy), (4, 3)), abs=1e-12)


def test_field_respects_resolution():
    g = open_map(5, 5)
    g.resolution = 0.5
    d = geodesic_field(g, [0]).dist
    assert d[4, 4] == pytest.approx(0.5 * 4 * math.sqrt(2))


def test_wall_makes_cells_unreachable():
    g = make_map(["..#..", "..#..", "..#.."])
    d = geodesic_field(g, [0]).dist
    assert np.isinf(d[:, 3:]).all()
    assert np.isfinite(d[:, :2]).all()


def test_no_corner_cutting():
    g = make_map([".#",
                  "#."])
    # free cells (1, 0) and (0, 1) touch only diagonally
    d = geodesic_field(g, [1]).dist
    assert np.isinf(d[1, 0])


def test_empty_or_invalid_sources_rejected():
    g = make_map([".#"])
    with pytest.raises(ValueError):
        geodesic_field(g, [])
    with pytest.raises(ValueError):
        geodesic_field(g, [1])


@given(st.integers(0, 2**32 - 1))
def test_field_matches_scipy_graph_oracle(seed):
    rng = np.random.default_rng(seed)
    g = random_map(rng, 9, 8, 0.3)
    free = np.flatnonzero(g.known_free)
    if free.size == 0:
        return
    src = int(free[rng.integers(free.size)])
    got = geodesic_field(g, [src]).dist.ravel()
    want = csgraph_field(g, src)
    assert np.array_equal(np.isinf(got), np.isinf(want))
    fin = np.isfinite(want)
    assert np.allclose(got[fin], want[fin], atol=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_geodesic_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    g = random_map(rng, 10, 10, 0.2)
    free = np.flatnonzero(g.known_free)
    if free.size < 3:
        return
    a, b, c = rng.choice(free, size=3, replace=False)
    da = geodesic_field(g, [a]).dist.ravel()
    db = geodesic_field(g, [b]).dist.ravel()
    assert da[a] == 0 and (da >= 0).all()
    assert da[b] == pytest.approx(db[a], abs=1e-9) or (np.isinf(da[b]) and np.isinf(db[a]))
    if np.isfinite(da[b]) and np.isfinite(db[c]):
        assert da[c] <= da[b] + db[c] + 1e-9
    if a != b:
        assert da[b] > 0


def test_multi_source_field_is_pointwise_min(rng):
    g = random_map(rng, 12, 12, 0.2)
    free = np.flatnonzero(g.known_free)
    srcs = rng.choice(free, size=3, replace=False)
    joint = geodesic_field(g, srcs).dist
    single = np.minimum.reduce([geodesic_field(g, [s]).dist for s in srcs])
    assert np.allclose(joint, single, equal_nan=False)


# --- paths ---------------------------------------------------------------------

def test_path_to_self():
    g = open_map(4, 4)
    p = shortest_path(g, 5, 5)
    assert p == [5]
    assert path_length(g, p) == 0.0


def test_open_map_path_has_octile_length():
    g = open_map(12, 6)
    a, b = g.xy_to_cell(1, 1), g.xy_to_cell(10, 4)
    p = shortest_path(g, a, b)
    assert p[0] == a and p[-1] == b
    assert path_length(g, p) == pytest.approx(octile((1, 1), (10, 4)))


def test_path_around_l_wall_longer_than_euclid():
    rows = ["........",
            ".######.",
            "......#.",
            "......#.",
            "........"]
    g = make_map(rows)
    a, b = g.xy_to_cell(2, 2), g.xy_to_cell(2, 4)
    p = shortest_path(g, a, b)
    assert path_length(g, p) > np.linalg.norm(g.center(a) - g.center(b))
    assert all(g.known_free.flat[c] for c in p)


def test_unreachable_path_raises():
    g = make_map(["..#.."])
    with pytest.raises(NoPathError):
        shortest_path(g, 0, 4)


@given(st.integers(0, 2**32 - 1))
def test_path_is_valid_shortest_and_tie_broken(seed):
    rng = np.random.default_rng(seed)
    g = random_map(rng, 9, 9, 0.2)
    free = np.flatnonzero(g.known_free)
    if free.size < 2:
        return
    a, b = (int(x) for x in rng.choice(free, size=2, replace=False))
    dist = geodesic_field(g, [a]).dist.ravel()
    if not np.isfinite(dist[b]):
        with pytest.raises(NoPathError):
            shortest_path(g, a, b)
        return
    p = shortest_path(g, a, b)
    assert p[0] == a and p[-1] == b
    assert path_length(g, p) == pytest.approx(dist[b], abs=1e-9)
    w = g.width
    for prev, cur in zip(p[:-1], p[1:]):
        cy, cx = divmod(cur, w)
        preds = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == dy == 0:
                    continue
                px, py = cx + dx, cy + dy
                if not (0 <= px < w and 0 <= py < g.height) or not g.known_free[py, px]:
                    continue
                if dx and dy and not (g.known_free[cy, px] and g.known_free[py, cx]):
                    continue
                step = math.sqrt(2) if dx and dy else 1.0
                if abs(dist[py * w + px] + step - dist[cur]) <= 1e-9:
                    preds.append(py * w + px)
        assert prev == min(preds)

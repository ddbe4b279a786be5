"""Compiled grid kernels: 8-connected Dijkstra and geodesic 1-center search.

All kernels operate on a flattened row-major free mask (``idx = iy * width + ix``).
Diagonal moves require both orthogonal neighbours to be free.
"""
import math

import numpy as np
from numba import njit

SQRT2 = math.sqrt(2.0)

# neighbour offsets: 4 straight moves then 4 diagonals
_DX = np.array([1, -1, 0, 0, 1, 1, -1, -1], dtype=np.int64)
_DY = np.array([0, 0, 1, -1, 1, -1, 1, -1], dtype=np.int64)


@njit(cache=True)
def _edge_ok(free, width, height, ux, uy, k, dx, dy):
    vx = ux + dx[k]
    vy = uy + dy[k]
    if vx < 0 or vx >= width or vy < 0 or vy >= height:
        return False
    if not free[vy * width + vx]:
        return False
    if k >= 4:
        if not free[uy * width + vx] or not free[vy * width + ux]:
            return False
    return True


@njit(cache=True)
def dijkstra(free, width, height, sources, res, stop_mask, stop_count):
    """Multi-source Dijkstra specialised to the two edge lengths of the grid.

    Pops happen in nondecreasing distance, so entries pushed onto the
    straight-move queue (d + res) and the diagonal queue (d + res*sqrt2) are
    each already sorted: two FIFO queues replace the heap exactly. Stops early
    once ``stop_count`` cells flagged in ``stop_mask`` are settled (pass
    ``stop_count <= 0`` to run to exhaustion).
    """
    n = free.size
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=np.bool_)
    diag = res * SQRT2
    cap = 4 * n + sources.size
    q0 = np.empty(cap, dtype=np.int64)  # straight moves and sources
    q1 = np.empty(cap, dtype=np.int64)  # diagonal moves
    d0 = np.empty(cap)
    d1 = np.empty(cap)
    h0 = t0 = h1 = t1 = 0
    for s in sources:
        if dist[s] != 0.0:
            dist[s] = 0.0
            q0[t0] = s
            d0[t0] = 0.0
            t0 += 1
    remaining = stop_count
    while h0 < t0 or h1 < t1:
        if h1 >= t1 or (h0 < t0 and d0[h0] <= d1[h1]):
            u = q0[h0]
            d = d0[h0]
            h0 += 1
        else:
            u = q1[h1]
            d = d1[h1]
            h1 += 1
        if done[u] or d > dist[u]:
            continue
        done[u] = True
        if stop_count > 0 and stop_mask[u]:
            remaining -= 1
            if remaining == 0:
                break
        ux = u % width
        uy = u // width
        for k in range(8):
            if not _edge_ok(free, width, height, ux, uy, k, _DX, _DY):
                continue
            v = (uy + _DY[k]) * width + ux + _DX[k]
            if done[v]:
                continue
            if k < 4:
                nd = d + res
                if nd < dist[v]:
                    dist[v] = nd
                    q0[t0] = v
                    d0[t0] = nd
                    t0 += 1
            else:
                nd = d + diag
                if nd < dist[v]:
                    dist[v] = nd
                    q1[t1] = v
                    d1[t1] = nd
                    t1 += 1
    return dist


@njit(cache=True)
def fields(free, width, height, sources, res):
    """One full single-source field per entry of ``sources`` -> (n, width*height)."""
    out = np.empty((sources.size, free.size))
    dummy = np.zeros(1, dtype=np.bool_)
    for i in range(sources.size):
        src = sources[i:i + 1]
        out[i] = dijkstra(free, width, height, src, res, dummy, 0)
    return out


@njit(cache=True)
def backtrack(free, width, height, dist, target, res, tol):
    """Walk predecessors from ``target`` down to a zero-distance cell.

    Among valid predecessors the smallest flat index wins. Returns the path
    source-first.
    """
    diag = res * SQRT2
    path = [target]
    u = target
    while dist[u] > 0.0:
        ux = u % width
        uy = u // width
        best = -1
        for k in range(8):
            if not _edge_ok(free, width, height, ux, uy, k, _DX, _DY):
                continue
            v = (uy + _DY[k]) * width + ux + _DX[k]
            w = res if k < 4 else diag
            if abs(dist[v] + w - dist[u]) <= tol * max(1.0, dist[u]):
                if best < 0 or v < best:
                    best = v
        if best < 0:
            break
        path.append(best)
        u = best
    path.reverse()
    return path


@njit(cache=True)
def one_center(free, width, height, region, res, tol):
    """Exact geodesic 1-center of ``region`` (sorted flat indices).

    Minimises max over the region of the known-free geodesic distance, ties
    to the smallest index. Eccentricities are only evaluated for candidates
    whose lower bound (max distance to already-expanded cells) can still beat
    the incumbent.
    """
    m = region.size
    in_region = np.zeros(free.size, dtype=np.bool_)
    for r in region:
        in_region[r] = True
    lower = np.zeros(m)
    resolved = np.zeros(m, dtype=np.bool_)
    best_ecc = np.inf
    best_pos = -1
    next_pos = 0
    took_far = False
    while True:
        src = region[next_pos:next_pos + 1]
        dist = dijkstra(free, width, height, src, res, in_region, m)
        ecc = 0.0
        far_pos = next_pos
        for j in range(m):
            dj = dist[region[j]]
            if dj > ecc:
                ecc = dj
                far_pos = j
            if dj > lower[j]:
                lower[j] = dj
        resolved[next_pos] = True
        eps = tol * max(1.0, ecc)
        if best_pos < 0 or ecc < best_ecc - eps or (
            abs(ecc - best_ecc) <= eps and next_pos < best_pos
        ):
            best_ecc = ecc
            best_pos = next_pos
        eps = tol * max(1.0, best_ecc)
        cand = -1
        for j in range(m):
            if resolved[j]:
                continue
            if lower[j] > best_ecc + eps:
                continue
            if lower[j] >= best_ecc - eps and j > best_pos:
                continue
            if cand < 0 or lower[j] < lower[cand]:
                cand = j
        if cand < 0:
            break
        # alternate with the farthest cell: a peripheral source tightens bounds fastest
        if not took_far and not resolved[far_pos]:
            next_pos = far_pos
            took_far = True
        else:
            next_pos = cand
            took_far = False
    return region[best_pos], best_ecc

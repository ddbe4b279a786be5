"""Raster snapshots of a world state (Pillow), live or replayed from a recorded run."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .partition import power_partition
from .world import FREE, OBSTACLE, UNKNOWN, GridMap, frontiers, load_map, robot_fields

CELL_PX = 4
UNKNOWN_RGB = (150, 150, 150)
OBSTACLE_RGB = (20, 20, 20)
FREE_RGB = (245, 245, 245)
FRONTIER_RGB = (240, 200, 0)
ROBOT_RGB = (20, 60, 200)
GOAL_RGB = (200, 0, 160)
TARGET_RGB = (220, 30, 30)
ESTIMATE_RGB = (0, 150, 60)
MODE_RGB = {"explore": (240, 200, 0), "cover": (20, 60, 200), "track": (220, 30, 30)}


def palette(n: int) -> np.ndarray:
    """``n`` light, well-separated colours (golden-angle hue walk)."""
    out = np.empty((n, 3), dtype=np.uint8)
    for i in range(n):
        h = (i * 0.618033988749895) % 1.0
        out[i] = [int(round(255 * (0.75 + 0.25 * math.cos(2 * math.pi * (h + k / 3.0)))))
                  for k in range(3)]
    return out


def render(grid_map: GridMap, owner=None, robots=(), targets=(), estimates=(),
           sensor_range: float = 0.0, cell_px: int = CELL_PX) -> Image.Image:
    """Layered image: knowledge, power-cell tint, frontiers, FoV circles, robots,
    goals (crosses), true targets (red) and estimates (green rings).

    ``robots`` is a sequence of dicts with ``position``, optional ``goal`` and ``mode``.
    """
    h, w = grid_map.shape
    rgb = np.empty((h, w, 3), dtype=np.uint8)
    rgb[grid_map.knowledge == UNKNOWN] = UNKNOWN_RGB
    rgb[grid_map.knowledge == OBSTACLE] = OBSTACLE_RGB
    free = grid_map.knowledge == FREE
    rgb[free] = FREE_RGB
    if owner is not None:
        owner = np.asarray(owner)
        n = int(owner.max()) + 1 if owner.size and owner.max() >= 0 else 0
        if n:
            cols = palette(n)
            tinted = free & (owner >= 0)
            rgb[tinted] = cols[owner[tinted]]
    front = frontiers(grid_map)
    rgb.reshape(-1, 3)[front] = FRONTIER_RGB
    # row 0 is the bottom of the map
    img = Image.fromarray(rgb[::-1]).resize((w * cell_px, h * cell_px), Image.NEAREST)
    draw = ImageDraw.Draw(img)
    res = grid_map.resolution
    top = h * cell_px

    def px(p):
        return p[0] / res * cell_px, top - p[1] / res * cell_px

    for r in robots:
        x, y = px(r["position"])
        if sensor_range > 0:
            rr = sensor_range / res * cell_px
            draw.ellipse([x - rr, y - rr, x + rr, y + rr], outline=(90, 90, 90))
    for r in robots:
        x, y = px(r["position"])
        draw.ellipse([x - 3, y - 3, x + 3, y + 3], fill=MODE_RGB.get(r.get("mode"), ROBOT_RGB),
                     outline=ROBOT_RGB)
        if r.get("goal") is not None:
            gx, gy = px(r["goal"])
            draw.line([gx - 3, gy - 3, gx + 3, gy + 3], fill=GOAL_RGB)
            draw.line([gx - 3, gy + 3, gx + 3, gy - 3], fill=GOAL_RGB)
    for p in estimates:
        x, y = px(p)
        draw.ellipse([x - 4, y - 4, x + 4, y + 4], outline=ESTIMATE_RGB)
    for p in targets:
        x, y = px(p)
        draw.ellipse([x - 2, y - 2, x + 2, y + 2], fill=TARGET_RGB)
    return img


def save_png(img: Image.Image, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no timestamps or text chunks, so equal pixels give equal bytes
    img.save(path, format="PNG", optimize=False, compress_level=6)
    return path


def render_world(world, path=None) -> Image.Image:
    robots = [{"position": r.position, "goal": r.goal, "mode": r.mode.value} for r in world.robots]
    targets = [t.position for t in world.targets if t.alive]
    img = render(world.grid, world.partition.owner, robots, targets, world.estimates,
                 world.model.range)
    if path is not None:
        save_png(img, path)
    return img


def replay(record_path, out_dir, every: int = 1, steps=None) -> list[Path]:
    """Render snapshots from a recorded-run log without re-simulating.

    The map knowledge is rebuilt from the revealed-cell deltas and each
    partition is recomputed from the logged sites and power radii.
    """
    record_path = Path(record_path)
    out_dir = Path(out_dir)
    written = []
    with record_path.open() as fh:
        head = json.loads(fh.readline())
        cfg = head["config"]
        grid = load_map(cfg["map"])
        variant = cfg.get("weight_variant", "signed")
        sensor_range = float(cfg["sensor"]["range"])
        states = [head["initial"]]
        wanted = None if steps is None else set(int(s) for s in steps)
        for step, line in enumerate(_lines(fh, states)):
            state = json.loads(line) if isinstance(line, str) else line
            cells = np.asarray(state["revealed"], dtype=np.int64)
            if cells.size:
                grid.knowledge.flat[cells] = np.where(grid.truth.flat[cells], OBSTACLE, FREE)
            if wanted is not None and step not in wanted:
                continue
            if wanted is None and step % every:
                continue
            sites = np.asarray(state["sites"], dtype=float)
            site_cells = np.array([grid.cell_of(p) for p in sites], dtype=np.int64)
            part = power_partition(grid, sites, np.asarray(state["radii"], dtype=float), variant,
                                   fields=robot_fields(grid, site_cells))
            img = render(grid, part.owner, state["robots"], state["targets"],
                         state["estimates"], sensor_range)
            written.append(save_png(img, out_dir / f"{record_path.stem}_step{step:05d}.png"))
    return written


def _lines(fh, first):
    yield from first
    yield from fh

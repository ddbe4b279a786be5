"""Ground-truth dynamics and the per-step decision loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import phd as phdmod
from .config import ScenarioConfig
from .metrics import (MetricsRecord, OspaParams, exploration_scope, explored_fraction,
                      extract_targets, ospa)
from .partition import Partition, locational_cost, nusc, power_partition
from .phd import PhdGrid, SensorModel
from .strategy import BetaMessage, GoalDecision, Mode, select
from .world import (FREE, OBSTACLE, GridMap, frontiers, geodesic_field, load_map,
                    line_of_sight, path_from_field, robot_fields)

log = logging.getLogger(__name__)

MAX_RETRIES = 8


@dataclass
class TargetState:
    position: np.ndarray
    velocity: np.ndarray
    alive: bool = True


@dataclass
class RobotState:
    id: int
    position: np.ndarray
    v_max: float = 2.0
    mode: Mode = Mode.COVER
    goal: np.ndarray | None = None
    beta: float = math.inf
    u: float = 0.0


@dataclass
class Measurement:
    robot: int
    position: np.ndarray
    is_clutter: bool = False  # diagnostics only; the filter never reads it


# --- targets -----------------------------------------------------------------

def _random_velocity(rng, speed_max: float) -> np.ndarray:
    heading = rng.uniform(0.0, 2.0 * math.pi)
    speed = rng.uniform(0.0, speed_max)
    return speed * np.array([math.cos(heading), math.sin(heading)])


def segment_clear(grid_map: GridMap, a, b, step: float = 0.05) -> bool:
    """True when sampled points of segment a-b stay in truth-free cells."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = max(1, int(math.ceil(np.linalg.norm(b - a) / (step * grid_map.resolution))))
    for s in np.linspace(0.0, 1.0, n + 1):
        p = a + s * (b - a)
        if not grid_map.in_bounds(p) or grid_map.truth.flat[grid_map.cell_of(p)]:
            return False
    return True


def step_targets(targets, grid_map: GridMap, dt: float, rng, speed_max: float = 1.5,
                 p_redirect: float = 0.02) -> list[TargetState]:
    """Constant-velocity targets with random redirects; blocked moves re-roll the
    heading up to MAX_RETRIES times, then hold."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = []
    for tgt in targets:
        if not tgt.alive:
            out.append(tgt)
            continue
        vel = tgt.velocity
        if p_redirect > 0 and rng.random() < p_redirect:
            vel = _random_velocity(rng, speed_max)
        pos = tgt.position
        for _ in range(MAX_RETRIES + 1):
            nxt = pos + vel * dt
            if segment_clear(grid_map, pos, nxt):
                pos = nxt
                break
            speed = float(np.linalg.norm(vel))
            heading = rng.uniform(0.0, 2.0 * math.pi)
            vel = speed * np.array([math.cos(heading), math.sin(heading)])
        out.append(TargetState(pos, vel, True))
    return out


# --- sensing -----------------------------------------------------------------

def truth_footprint(model: SensorModel, grid_map: GridMap, position) -> np.ndarray:
    """Truth-free cells in line of sight of the robot's cell centre."""
    seen = line_of_sight(grid_map, grid_map.cell_of(position), model.range)
    return seen[~grid_map.truth.flat[seen]]


def sense(robot: RobotState, targets, model: SensorModel, grid_map: GridMap, rng,
          clutter_rng=None, footprint=None) -> list[Measurement]:
    """Noisy detections of visible targets plus Poisson clutter over the footprint."""
    clutter_rng = rng if clutter_rng is None else clutter_rng
    if footprint is None:
        footprint = truth_footprint(model, grid_map, robot.position)
    out = []
    for tgt in targets:
        if not tgt.alive or not grid_map.in_bounds(tgt.position):
            continue
        cell = grid_map.cell_of(tgt.position)
        i = np.searchsorted(footprint, cell)
        if i >= footprint.size or footprint[i] != cell:
            continue
        if rng.random() < model.p_detect:
            noise = rng.normal(0.0, model.meas_std, size=2)
            out.append(Measurement(robot.id, tgt.position + noise, False))
    n_clutter = clutter_rng.poisson(model.clutter_rate) if model.clutter_rate > 0 else 0
    if n_clutter and footprint.size:
        cells = footprint[clutter_rng.integers(0, footprint.size, size=n_clutter)]
        offs = clutter_rng.uniform(0.0, grid_map.resolution, size=(n_clutter, 2))
        corners = grid_map.centers(cells) - 0.5 * grid_map.resolution
        out.extend(Measurement(robot.id, p, True) for p in corners + offs)
    return out


# --- robots ------------------------------------------------------------------

def step_robot(robot: RobotState, goal, grid_map: GridMap, dt: float, dist=None) -> RobotState:
    """Advance up to v_max*dt metres along the geodesic path to ``goal``.

    ``dist`` may carry the robot's precomputed geodesic field.
    Raises NoPathError when the goal is unreachable.
    """
    goal = np.asarray(goal, dtype=float)
    pos = np.asarray(robot.position, dtype=float)
    start = grid_map.cell_of(pos)
    end = grid_map.cell_of(goal)
    if dist is None:
        dist = geodesic_field(grid_map, [start]).dist
    path = path_from_field(grid_map, dist, end)
    waypoints = [grid_map.center(c) for c in path[1:]]
    if not waypoints or np.any(waypoints[-1] != goal):
        waypoints.append(goal)
    budget = robot.v_max * dt
    for wp in waypoints:
        seg = float(np.linalg.norm(wp - pos))
        if seg <= budget:
            pos = wp
            budget -= seg
        else:
            pos = pos + (wp - pos) * (budget / seg)
            break
    return RobotState(robot.id, pos, robot.v_max, robot.mode, goal, robot.beta, robot.u)


# --- world -------------------------------------------------------------------

@dataclass
class World:
    cfg: ScenarioConfig
    grid: GridMap
    phd: PhdGrid
    robots: list
    targets: list
    partition: Partition
    model: SensorModel
    mu: float
    scope: np.ndarray
    rngs: dict
    t: float = 0.0
    step_index: int = 0
    betas: list = field(default_factory=list)
    decisions: list = field(default_factory=list)
    metrics: list = field(default_factory=list)
    events: list = field(default_factory=list)
    newly_revealed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    truth_at_sensing: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    # robot positions and power radii the current partition was built from
    sites: list = field(default_factory=list)
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    estimates: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    ignored_measurements: int = 0  # detections that fell outside the grid

    @property
    def strategy(self) -> str:
        return self.cfg.mode if self.cfg.mode in ("coverage-only", "tracking-only") else "full"

    @property
    def weighted(self) -> bool:
        return self.cfg.mode != "voronoi-unweighted"


def spawn_cells(grid_map: GridMap, spawn, n: int) -> np.ndarray:
    """``n`` distinct truth-free cells spread evenly through the spawn rectangle."""
    x0, y0, x1, y1 = spawn
    r = grid_map.resolution
    ix0, iy0 = max(0, int(x0 // r)), max(0, int(y0 // r))
    ix1, iy1 = min(grid_map.width - 1, int(x1 // r)), min(grid_map.height - 1, int(y1 // r))
    cells = [iy * grid_map.width + ix for iy in range(iy0, iy1 + 1) for ix in range(ix0, ix1 + 1)
             if not grid_map.truth[iy, ix]]
    if len(cells) < n:
        raise ValueError(f"spawn region holds {len(cells)} free cells, need {n}")
    pick = np.linspace(0, len(cells) - 1, n).round().astype(int)
    return np.array(cells)[pick]


def _reveal_into(grid_map: GridMap, cells: np.ndarray) -> np.ndarray:
    before = grid_map.knowledge.flat[cells]
    grid_map.knowledge.flat[cells] = np.where(grid_map.truth.flat[cells], OBSTACLE, FREE)
    return cells[before == 0]


def init_world(cfg: ScenarioConfig, seed: int | None = None) -> World:
    cfg = cfg.validate()
    seed = cfg.seed if seed is None else seed
    streams = np.random.SeedSequence(seed).spawn(4)
    rngs = {name: np.random.default_rng(s)
            for name, s in zip(("init", "targets", "sensing", "clutter"), streams)}
    grid = load_map(cfg.map)
    model = cfg.sensor.model()
    starts = spawn_cells(grid, cfg.spawn, cfg.n_robots)
    scope = exploration_scope(grid, starts)
    robots = [RobotState(i, grid.center(c), cfg.robot_speed) for i, c in enumerate(starts)]
    revealed = [_reveal_into(grid, truth_footprint_all(model, grid, r.position)) for r in robots]

    reach = np.flatnonzero(scope & ~grid.truth)
    targets = []
    for _ in range(cfg.targets.count):
        targets.append(_spawn_target(grid, reach, rngs["init"], cfg.targets.speed_max))

    phd = phdmod.uniform_phd(grid, cfg.phd.init_intensity)
    mu = cfg.mu if cfg.mu is not None else 1.0 / cfg.phd.init_intensity
    # initial cells: power diagram weighted by each robot's peak sensing capacity
    cells = np.array([grid.cell_of(r.position) for r in robots])
    radii = np.zeros(len(robots))
    if cfg.mode != "voronoi-unweighted":
        for k, r in enumerate(robots):
            radii[k] = nusc(phd, model, grid, r.position, mu)[0]
    part = power_partition(grid, [r.position for r in robots], radii, cfg.weight_variant,
                           fields=robot_fields(grid, cells))
    return World(cfg, grid, phd, robots, targets, part, model, mu, scope, rngs,
                 betas=[math.inf] * len(robots),
                 newly_revealed=np.unique(np.concatenate(revealed)),
                 sites=[r.position.copy() for r in robots], radii=radii)


def truth_footprint_all(model: SensorModel, grid_map: GridMap, position) -> np.ndarray:
    """All cells (walls included) in line of sight of the robot's cell centre."""
    return line_of_sight(grid_map, grid_map.cell_of(position), model.range)


def _spawn_target(grid: GridMap, cells: np.ndarray, rng, speed_max: float) -> TargetState:
    c = cells[rng.integers(0, cells.size)]
    pos = grid.center(c) + rng.uniform(-0.5, 0.5, size=2) * grid.resolution
    return TargetState(pos, _random_velocity(rng, speed_max), True)


def run_step(world: World) -> World:
    """Advance the world by one step (mutates and returns ``world``)."""
    cfg, grid, model = world.cfg, world.grid, world.model
    n = len(world.robots)

    # (1) reveal
    seen = [truth_footprint_all(model, grid, r.position) for r in world.robots]
    world.newly_revealed = np.unique(np.concatenate([_reveal_into(grid, s) for s in seen]))

    # (2) predict
    motion_std = cfg.phd.motion_std
    if motion_std is None:
        motion_std = cfg.targets.speed_max * cfg.dt
    birth = phdmod.uniform_birth(grid, cfg.phd.birth_mass)
    phd = phdmod.predict(world.phd, motion_std, cfg.phd.p_survive, birth, grid)

    # (3) sense
    world.truth_at_sensing = np.array([t.position for t in world.targets if t.alive]).reshape(-1, 2)
    scans = []
    for r, s in zip(world.robots, seen):
        foot = s[~grid.truth.flat[s]]
        scans.append(sense(r, world.targets, model, grid, world.rngs["sensing"],
                           world.rngs["clutter"], footprint=foot))

    # (4) update each robot's previous cell with its own scan
    fovs = [phdmod.fov_cells(model, grid, r.position) for r in world.robots]
    prev_owner = world.partition.owner
    world.ignored_measurements += sum(not grid.in_bounds(m.position) for z in scans for m in z)
    for r, z, fov in zip(world.robots, scans, fovs):
        phd = phdmod.update(phd, model, grid, r.position, [m.position for m in z],
                            region=prev_owner == r.id, fov=fov)
    world.phd = phd

    # (5) NUSC + partition
    radii = np.zeros(n)
    for k, (r, fov) in enumerate(zip(world.robots, fovs)):
        _, _, u = nusc(phd, model, grid, r.position, world.mu, fov=fov)
        r.u = u
        if world.weighted:
            radii[k] = u
    cells = np.array([grid.cell_of(r.position) for r in world.robots])
    dists = robot_fields(grid, cells)
    part = power_partition(grid, [r.position for r in world.robots], radii,
                           cfg.weight_variant, fields=dists)
    world.partition = part

    # (6) select, using last step's beta broadcasts
    front = frontiers(grid)
    hx, hy = cfg.kde_bandwidth
    decisions = []
    for r in world.robots:
        msgs = [BetaMessage(j, tuple(world.robots[j].position), world.betas[j])
                for j in part.neighbors(r.id)]
        try:
            dec = select(r.id, part, grid, phd, msgs, cfg.d_f, r.position, hx, hy,
                         dist_i=dists[r.id], front=front, strategy=world.strategy)
        except Exception as exc:  # degrade this robot to hold position
            world.events.append(f"t={world.t:g} robot {r.id} select failed: {exc!r}")
            dec = GoalDecision(r.mode, r.position.copy(), r.beta)
        decisions.append(dec)
    world.betas = [d.beta for d in decisions]

    # (7) move robots
    sites = [r.position.copy() for r in world.robots]
    world.sites, world.radii = sites, radii
    for k, (r, dec) in enumerate(zip(world.robots, decisions)):
        r.mode, r.beta = dec.mode, dec.beta
        try:
            moved = step_robot(r, dec.goal, grid, cfg.dt, dist=dists[k])
        except Exception as exc:  # unreachable goal or similar: hold position
            world.events.append(f"t={world.t:g} robot {r.id} holds: {exc!r}")
            moved = RobotState(r.id, r.position, r.v_max, r.mode, dec.goal, r.beta, r.u)
        world.robots[k] = moved
    world.decisions = decisions

    # (8) move targets
    rng = world.rngs["targets"]
    tcfg = cfg.targets
    targets = step_targets(world.targets, grid, cfg.dt, rng, tcfg.speed_max, tcfg.p_redirect)
    if tcfg.p_death > 0:
        for tgt in targets:
            if tgt.alive and rng.random() < tcfg.p_death:
                tgt.alive = False
    if tcfg.p_birth > 0 and rng.random() < tcfg.p_birth:
        reach = np.flatnonzero(world.scope & ~grid.truth)
        targets.append(_spawn_target(grid, reach, rng, tcfg.speed_max))
    world.targets = targets

    # (9) metrics, scored against the target set the filter just observed
    world.step_index += 1
    world.t = world.step_index * cfg.dt
    est = extract_targets(phd, cfg.suppression_radius)
    world.estimates = est
    modes = [d.mode for d in decisions]
    cost = locational_cost(part, sites, radii, phd, grid,
                           cfg.weight_variant, fields=dists)
    world.metrics.append(MetricsRecord(
        t=world.t,
        ospa=ospa(world.truth_at_sensing, est, OspaParams(cfg.ospa_c, cfg.ospa_p)),
        explored=explored_fraction(grid, world.scope),
        cost=cost,
        n_estimated=len(est),
        phd_mass=phd.mass(),
        n_explore=modes.count(Mode.EXPLORE),
        n_cover=modes.count(Mode.COVER),
        n_track=modes.count(Mode.TRACK),
    ))
    return world


def run(cfg: ScenarioConfig, seed: int | None = None, steps: int | None = None,
        on_step=None) -> World:
    world = init_world(cfg, seed)
    for _ in range(cfg.steps if steps is None else steps):
        run_step(world)
        if on_step is not None:
            on_step(world)
    return world

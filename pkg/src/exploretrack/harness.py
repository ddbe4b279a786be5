"""Batch trials over (variant, seed) pairs, per-run artifacts and comparison summaries."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import simulation as sim
from .config import MODES, ScenarioConfig, load_scenario
from .metrics import MetricsRecord, smooth, time_to_threshold

log = logging.getLogger(__name__)

WORKERS_ENV = "EXPLORETRACK_WORKERS"
METRIC_FIELDS = list(MetricsRecord.__dataclass_fields__)
FINAL_WINDOW_S = 500.0


@dataclass(frozen=True)
class Variant:
    """One simulated configuration: a baseline mode plus optional d_f override."""
    mode: str
    d_f: float | None = None

    @property
    def label(self) -> str:
        if self.d_f is None:
            return self.mode
        return f"{self.mode}_df{'inf' if math.isinf(self.d_f) else f'{self.d_f:g}'}"

    def apply(self, cfg: ScenarioConfig) -> ScenarioConfig:
        return cfg.with_overrides(mode=self.mode, d_f=self.d_f)


@dataclass
class TrialPlan:
    scenario: ScenarioConfig | str | Path
    seeds: list
    modes: list = field(default_factory=lambda: ["full"])
    out_dir: str | Path = "runs"
    d_f_values: list | None = None  # None keeps the scenario's d_f
    steps: int | None = None
    snapshot_every: int = 0
    record: bool = False

    def config(self) -> ScenarioConfig:
        if isinstance(self.scenario, ScenarioConfig):
            return self.scenario.validate()
        return load_scenario(self.scenario)

    def variants(self) -> list[Variant]:
        dfs = [None] if not self.d_f_values else list(self.d_f_values)
        return [Variant(m, d) for m in self.modes for d in dfs]

    def validate(self) -> "TrialPlan":
        if not self.seeds:
            raise ValueError("a trial plan needs at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown mode {m!r}; expected one of {MODES}")
        out = Path(self.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise ValueError(f"output directory {out} is not writable")
        return self


@dataclass
class RunResult:
    label: str
    seed: int
    ok: bool
    csv_path: str | None = None
    error: str | None = None


# --- single run --------------------------------------------------------------

def run_csv_path(out_dir, label: str, seed: int) -> Path:
    return Path(out_dir) / "runs" / label / f"seed_{seed}.csv"


def write_metrics_csv(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with tmp.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
        writer.writeheader()
        for rec in records:
            writer.writerow({k: _fmt(v) for k, v in rec.row().items()})
    tmp.replace(path)


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else v


def read_metrics_csv(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in METRIC_FIELDS}


DECISION_FIELDS = ["t", "robot", "mode", "goal_x", "goal_y", "beta"]


def decision_rows(world: sim.World):
    """Per-robot (mode, goal, beta) chosen in the step that just ran."""
    for r, d in enumerate(world.decisions):
        yield [_fmt(world.t), r, d.mode.value, _fmt(float(d.goal[0])), _fmt(float(d.goal[1])),
               "inf" if math.isinf(d.beta) else _fmt(float(d.beta))]


def record_state(world: sim.World) -> dict:
    """One line of the recorded-run log: enough to redraw the step without re-simulating."""
    return {
        "t": world.t,
        "revealed": [int(c) for c in world.newly_revealed],
        "sites": [[float(x), float(y)] for x, y in world.sites],
        "radii": [float(r) for r in world.radii],
        "robots": [{"id": r.id, "position": [float(v) for v in r.position],
                    "mode": r.mode.value,
                    "goal": None if r.goal is None else [float(v) for v in r.goal],
                    "beta": None if math.isinf(r.beta) else float(r.beta),
                    "u": float(r.u)} for r in world.robots],
        "targets": [[float(v) for v in t.position] for t in world.targets if t.alive],
        "estimates": [[float(v) for v in e] for e in world.estimates],
    }


def run_one(cfg: ScenarioConfig, seed: int, label: str, out_dir, steps: int | None = None,
            snapshot_every: int = 0, record: bool = False) -> RunResult:
    """Simulate one (variant, seed) pair and write its metrics CSV. With ``record``
    also write the per-step state log, the per-robot decision log and the final
    partition's owner matrix. Failures are returned, not raised."""
    out_dir = Path(out_dir)
    path = run_csv_path(out_dir, label, seed)
    try:
        world = sim.init_world(cfg, seed)
        rec_fh = dec_fh = None
        if record:
            rec_path = path.with_suffix(".jsonl")
            rec_path.parent.mkdir(parents=True, exist_ok=True)
            rec_fh = rec_path.open("w")
            head = {"config": cfg.to_dict(), "seed": seed, "label": label,
                    "initial": record_state(world)}
            rec_fh.write(json.dumps(head) + "\n")
            dec_fh = path.with_name(f"{path.stem}_decisions.csv").open("w", newline="")
            dec_csv = csv.writer(dec_fh)
            dec_csv.writerow(DECISION_FIELDS)
        try:
            n = cfg.steps if steps is None else steps
            for _ in range(n):
                sim.run_step(world)
                if rec_fh is not None:
                    rec_fh.write(json.dumps(record_state(world)) + "\n")
                    dec_csv.writerows(decision_rows(world))
                if snapshot_every and world.step_index % snapshot_every == 0:
                    from .render import render_world
                    snap = out_dir / "snapshots" / label / f"seed_{seed}_t{world.step_index:05d}.png"
                    render_world(world, snap)
        finally:
            for fh in (rec_fh, dec_fh):
                if fh is not None:
                    fh.close()
        if record:
            world.partition.to_csv(path.with_name(f"{path.stem}_owner.csv"))
        write_metrics_csv(path, world.metrics)
        for ev in world.events:
            log.info("%s seed %d: %s", label, seed, ev)
        if world.ignored_measurements:
            log.info("%s seed %d: %d out-of-grid measurement(s) ignored", label, seed,
                     world.ignored_measurements)
        return RunResult(label, seed, True, str(path))
    except Exception as exc:  # a failed run is reported, the sweep carries on
        log.warning("run %s seed %d failed: %r", label, seed, exc)
        return RunResult(label, seed, False, None, repr(exc))


def _run_job(args) -> RunResult:
    return run_one(*args)


# --- aggregation -------------------------------------------------------------

def smoothing_samples(cfg: ScenarioConfig) -> int:
    return max(1, int(round(cfg.smoothing_window_s / cfg.dt)))


def run_summary(series: dict, cfg: ScenarioConfig) -> dict:
    """Scalar figures for one run (or for a seed-averaged series)."""
    t = series["t"]
    sm = smooth(series["ospa"], smoothing_samples(cfg))
    n_win = max(1, int(round(FINAL_WINDOW_S / cfg.dt)))
    explored = series["explored"]
    hit = np.flatnonzero(explored >= 0.99)
    return {
        "first_window_ospa": float(sm[:n_win].mean()) if sm.size else math.nan,
        "final_window_ospa": float(sm[-n_win:].mean()) if sm.size else math.nan,
        "time_to_threshold": time_to_threshold(t, sm, 0.5),
        "time_to_explored_99": float(t[hit[0]]) if hit.size else None,
        "final_explored": float(explored[-1]) if explored.size else math.nan,
    }


def aggregate(series_list: list[dict]) -> dict[str, np.ndarray]:
    """Mean and std across runs of every metric column, truncated to the shortest run."""
    n = min(len(s["t"]) for s in series_list)
    out = {"t": series_list[0]["t"][:n]}
    for k in METRIC_FIELDS:
        if k == "t":
            continue
        stack = np.stack([s[k][:n] for s in series_list])
        out[k] = stack.mean(axis=0)
        out[k + "_std"] = stack.std(axis=0)
    return out


def write_aggregate_csv(path, agg: dict, cfg: ScenarioConfig) -> None:
    cols = ["t", "ospa", "ospa_std", "ospa_smoothed", "explored", "explored_std", "n_estimated"]
    sm = smooth(agg["ospa"], smoothing_samples(cfg))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(len(agg["t"])):
            w.writerow([_fmt(float(agg["t"][i])), _fmt(float(agg["ospa"][i])),
                        _fmt(float(agg["ospa_std"][i])), _fmt(float(sm[i])),
                        _fmt(float(agg["explored"][i])), _fmt(float(agg["explored_std"][i])),
                        _fmt(float(agg["n_estimated"][i]))])


def _present(values):
    return [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]


def _mean_or_none(values):
    vals = _present(values)
    return float(np.mean(vals)) if vals else None


def _std_or_none(values):
    vals = _present(values)
    return float(np.std(vals)) if vals else None


def variant_report(runs: dict[int, dict], cfg: ScenarioConfig) -> dict:
    per_seed = {str(s): run_summary(runs[s], cfg) for s in sorted(runs)}
    agg = aggregate([runs[s] for s in sorted(runs)])
    keys = ("first_window_ospa", "final_window_ospa", "time_to_threshold", "time_to_explored_99",
            "final_explored")
    return {
        "seeds": sorted(runs),
        "per_seed": per_seed,
        "seed_mean": {k: _mean_or_none([p[k] for p in per_seed.values()]) for k in keys},
        "seed_std": {k: _std_or_none([p[k] for p in per_seed.values()]) for k in keys},
        "of_mean_series": run_summary(agg, cfg),
    }


def panels(report: dict) -> dict:
    """Group variant results the way the three comparison panels do."""
    v = report["variants"]

    def pick(labels, key):
        return {lab: v[lab]["seed_mean"][key] for lab in labels if lab in v}

    partition = [lab for lab in ("full", "voronoi-unweighted") if lab in v]
    dfs = sorted(lab for lab in v if lab.startswith("full_df"))
    strategy = [lab for lab in ("full", "coverage-only", "tracking-only") if lab in v]
    return {
        "partition_variant": {"time_to_threshold": pick(partition, "time_to_threshold"),
                              "final_window_ospa": pick(partition, "final_window_ospa")},
        "d_f_sweep": {"time_to_threshold": pick(dfs, "time_to_threshold"),
                      "final_window_ospa": pick(dfs, "final_window_ospa"),
                      "first_window_ospa": pick(dfs, "first_window_ospa")},
        "strategy_ablation": {"final_window_ospa": pick(strategy, "final_window_ospa")},
    }


# --- orchestration -----------------------------------------------------------

def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring %s=%r (not an integer)", WORKERS_ENV, raw)
        return 1


def run_trials(plan: TrialPlan, reuse: bool = False) -> dict:
    """Run every (variant, seed) pair once and write per-run CSVs, per-variant
    aggregate CSVs, ``summary.json`` and ``manifest.json`` under ``plan.out_dir``.

    With ``reuse`` an existing per-run CSV from a manifest with the same config
    hash is kept instead of re-simulating.
    """
    plan.validate()
    base = plan.config()
    out = Path(plan.out_dir)
    variants = plan.variants()
    cfgs = {v.label: v.apply(base) for v in variants}
    manifest_path = out / "manifest.json"
    old = json.loads(manifest_path.read_text()) if reuse and manifest_path.exists() else {}
    old_hashes = old.get("config_hashes", {})

    jobs, results = [], []
    for v in variants:
        cfg = cfgs[v.label]
        for s in plan.seeds:
            path = run_csv_path(out, v.label, s)
            if reuse and path.exists() and old_hashes.get(v.label) == cfg.digest() \
                    and old.get("steps") == plan.steps:
                results.append(RunResult(v.label, s, True, str(path)))
                continue
            jobs.append((cfg, s, v.label, out, plan.steps, plan.snapshot_every, plan.record))

    n_workers = min(worker_count(), max(1, len(jobs)))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results.extend(pool.map(_run_job, jobs))
    else:
        results.extend(_run_job(j) for j in jobs)

    manifest = {
        "scenario": base.to_dict(),
        "scenario_hash": base.digest(),
        "config_hashes": {lab: c.digest() for lab, c in cfgs.items()},
        "seeds": list(plan.seeds),
        "variants": [v.label for v in variants],
        "steps": plan.steps,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    report = {"variants": {}, "failed": []}
    for v in variants:
        ok = sorted((r for r in results if r.label == v.label and r.ok), key=lambda r: r.seed)
        bad = [r for r in results if r.label == v.label and not r.ok]
        report["failed"].extend({"variant": r.label, "seed": r.seed, "error": r.error} for r in bad)
        if bad:
            log.warning("%s: %d of %d runs failed; aggregating the rest", v.label, len(bad),
                        len(plan.seeds))
        if not ok:
            continue
        runs = {r.seed: read_metrics_csv(r.csv_path) for r in ok}
        cfg = cfgs[v.label]
        write_aggregate_csv(out / f"aggregate_{v.label}.csv", aggregate(list(runs.values())), cfg)
        report["variants"][v.label] = variant_report(runs, cfg)
    report["panels"] = panels(report)
    (out / "summary.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report

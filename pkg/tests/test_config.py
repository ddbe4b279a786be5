import math

import pytest

from exploretrack.config import (ScenarioConfig, ScenarioError, dump_scenario, load_scenario,
                                 parse_scenario)


def test_defaults_and_bundled_scenarios():
    cfg = parse_scenario("")
    assert cfg == ScenarioConfig()
    full = load_scenario("six_room.yaml")
    assert (full.n_robots, full.sensor.range, full.robot_speed) == (20, 12.0, 2.0)
    desk = load_scenario("three_room.yaml")
    assert (desk.n_robots, desk.steps) == (8, 1500)


def test_measurement_covariance_units():
    cfg = parse_scenario("sensor:\n  meas_cov: 0.25\n")
    assert cfg.sensor.meas_std == pytest.approx(0.5)
    cfg = parse_scenario("sensor:\n  meas_cov: 0.25\n  meas_cov_units: std\n")
    assert cfg.sensor.meas_std == pytest.approx(0.25)


def test_infinite_d_f_round_trips():
    cfg = parse_scenario("d_f: inf\n")
    assert math.isinf(cfg.d_f)
    again = parse_scenario(dump_scenario(cfg))
    assert again == cfg and again.digest() == cfg.digest()


def test_dump_round_trip_of_bundled_scenario():
    cfg = load_scenario("six_room.yaml")
    assert parse_scenario(dump_scenario(cfg)) == cfg


@pytest.mark.parametrize("text, line", [
    ("n_robots: 3\nbogus: 1\n", 2),
    ("mode: full\n\nn_robots: many\n", 3),
    ("sensor:\n  range: 12\n  p_detect: [1]\n", 3),
    ("sensor:\n  rnage: 12\n", 2),
    ("n_robots: [1, 2\n", 2),
    ("sensor: 5\n", 1),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ScenarioError, match=rf"scen.yaml:{line}:"):
        parse_scenario(text, "scen.yaml")


@pytest.mark.parametrize("text", ["mode: greedy\n", "n_robots: 0\n", "d_f: -1\n",
                                  "weight_variant: cubed\n", "sensor:\n  p_detect: 2\n",
                                  "spawn: [1, 2]\n", "- a\n- b\n"])
def test_invalid_values_rejected(text):
    with pytest.raises(ScenarioError):
        parse_scenario(text, "scen.yaml")


def test_overrides_validate_and_change_digest():
    cfg = ScenarioConfig()
    other = cfg.with_overrides(mode="coverage-only", d_f=None)
    assert other.mode == "coverage-only" and other.d_f == cfg.d_f
    assert other.digest() != cfg.digest()
    with pytest.raises(ValueError):
        cfg.with_overrides(n_robots=0)


def test_bundled_full_map_matches_published_setup():
    # [PAPER] mission parameters of the full-map experiment
    from exploretrack import simulation as sim
    cfg = load_scenario("six_room.yaml")
    assert (cfg.n_robots, cfg.targets.count) == (20, 20)
    assert (cfg.robot_speed, cfg.targets.speed_max) == (2.0, 1.5)
    assert (cfg.sensor.range, cfg.sensor.p_detect, cfg.sensor.meas_cov) == (12.0, 0.8, 0.25)
    assert (cfg.d_f, cfg.smoothing_window_s, cfg.steps * cfg.dt) == (50.0, 20.0, 4000.0)
    w = sim.init_world(cfg, seed=0)
    assert (w.grid.width * w.grid.resolution, w.grid.height * w.grid.resolution) == (100, 100)

"""Multi-robot simultaneous exploration, coverage and multi-target tracking on grid maps."""
from .config import ScenarioConfig, load_scenario
from .simulation import World, init_world, run, run_step

__version__ = "0.1.0"

__all__ = ["ScenarioConfig", "World", "init_world", "load_scenario", "run", "run_step"]

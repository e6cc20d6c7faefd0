"""Deterministic world simulation, scenario replay, and the live service."""

from devi.sim.config import SimConfig  # noqa: F401
from devi.sim.runner import SimLoop, run_scenario  # noqa: F401
from devi.sim.scenario import Scenario, ScenarioParseError, load_scenario  # noqa: F401

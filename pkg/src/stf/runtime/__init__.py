"""Deterministic simulation of configurations."""

from stf.runtime.da import DAError, InstantiationError
from stf.runtime.engine import DEFAULT_MAX_TICKS, Simulation
from stf.runtime.interpreter import AstProgram, instantiate, pick_configuration
from stf.runtime.scenario import ScenarioError, ScenarioScript, load_scenario, parse_scenario
from stf.runtime.trace import Trace, TraceEvent


def run(sim: Simulation, scenario=None, max_ticks=None) -> Trace:
    return sim.run(scenario, max_ticks)


__all__ = [
    "AstProgram", "DAError", "DEFAULT_MAX_TICKS", "InstantiationError", "ScenarioError",
    "ScenarioScript", "Simulation", "Trace", "TraceEvent", "instantiate", "load_scenario",
    "parse_scenario", "pick_configuration", "run",
]

"""Deterministic simulator, Byzantine strategies and the invariant oracle."""

from .config import SimConfig, load_scenario, parse_scenario
from .engine import RunResult, Simulation, run

__all__ = ["SimConfig", "load_scenario", "parse_scenario", "RunResult", "Simulation", "run"]

"""Deterministic discrete-event simulation harness."""

from .harness import Simulation, durability_trial, run  # noqa: F401
from .oracle import oracle_indices  # noqa: F401
from .scenario import Scenario, load_scenario  # noqa: F401

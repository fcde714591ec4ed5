"""Teletraffic model and CAC simulator for integrated macrocell/femtocell networks."""

__version__ = "0.1.0"

from .scenario import ScenarioConfig, derive_capacities, preset, split_arrivals, validate
from .analytic import (
    FixedPointSolution,
    HandoverProbabilities,
    forced_termination,
    handover_probabilities,
    solve_fixed_point,
)

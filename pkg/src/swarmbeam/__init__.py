"""Secure two-swarm aerial beamforming benchmark suite."""

from .beamforming import AngularGrid, ArrayState, SphericalDirection
from .objectives import ObjectiveEvaluator, ObjectiveVector, Solution
from .optimizer import EvolutionConfig, ParetoArchive
from .scenario import ChannelParams, EnergyParams, Scenario, ScenarioSpec, generate_scenario

__version__ = "0.1.0"

__all__ = [
    "AngularGrid",
    "ArrayState",
    "ChannelParams",
    "EnergyParams",
    "EvolutionConfig",
    "ObjectiveEvaluator",
    "ObjectiveVector",
    "ParetoArchive",
    "Scenario",
    "ScenarioSpec",
    "Solution",
    "SphericalDirection",
    "generate_scenario",
    "__version__",
]

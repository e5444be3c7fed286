import math

import pytest

from swarmbeam.beamforming import AngularGrid
from swarmbeam.objectives import ObjectiveEvaluator
from swarmbeam.scenario import ScenarioSpec, generate_scenario

# Desk-scale benchmark preset: 8 aircraft per swarm, 4 known + 2 unknown
# eavesdroppers, 5-degree coarse grid with a refined mainlobe window.
DESK_SPEC = ScenarioSpec(n_uav=8, n_eaves_known=4, n_eaves_unknown=2)
DESK_GRID_DEG = 5.0
DESK_WINDOW_DEG = (2.5, 0.25)  # half-angle, fine resolution


def desk_evaluator(scenario):
    return ObjectiveEvaluator(
        scenario,
        AngularGrid.from_degrees(DESK_GRID_DEG),
        window_half_angle=math.radians(DESK_WINDOW_DEG[0]),
        window_fine_resolution=math.radians(DESK_WINDOW_DEG[1]),
    )


@pytest.fixture(scope="session")
def desk_scenario():
    return generate_scenario(0, DESK_SPEC)


@pytest.fixture(scope="session")
def desk_grid():
    return AngularGrid.from_degrees(DESK_GRID_DEG)

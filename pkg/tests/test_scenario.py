import dataclasses
import json
import math

import numpy as np
import pytest

from swarmbeam.scenario import (
    Box,
    PlacementBudgetError,
    ScenarioInvariantError,
    ScenarioSpec,
    SchemaVersionError,
    condition_vector,
    condition_vector_inverse,
    generate_scenario,
    load_scenario,
    save_scenario,
    scenario_to_dict,
    scenarios_equal,
    urban_default_channel,
)


def pairwise_min_distance(points):
    # independent oracle: exhaustive O(n^2) scan
    best = math.inf
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            best = min(best, float(np.linalg.norm(points[i] - points[j])))
    return best


def test_generate_matches_requested_dimensions():
    spec = ScenarioSpec(
        n_uav=16, n_eaves_known=4, n_eaves_unknown=2,
        swarm_separation=5000.0, area_side=100.0,
        altitude_lo=70.0, altitude_hi=120.0,
    )
    s = generate_scenario(7, spec)
    assert s.n_uav == 16
    assert s.known_eavesdroppers.shape == (4, 3)
    assert s.unknown_eavesdroppers.shape == (2, 3)
    b1, b2 = s.area_bounds
    assert (b1.x_hi - b1.x_lo, b1.y_hi - b1.y_lo) == (100.0, 100.0)
    assert (b1.z_lo, b1.z_hi) == (70.0, 120.0)
    assert b2.x_lo - b1.x_lo == 5000.0
    for positions in s.swarm_initial_positions:
        assert np.all(positions[:, 2] >= 70.0) and np.all(positions[:, 2] <= 120.0)


def test_generate_deterministic():
    spec = ScenarioSpec(n_uav=6, n_eaves_known=3, n_eaves_unknown=1)
    a = generate_scenario(7, spec)
    b = generate_scenario(7, spec)
    assert scenarios_equal(a, b)
    assert np.array_equal(a.swarm_initial_positions[0], b.swarm_initial_positions[0])
    assert np.array_equal(a.known_eavesdroppers, b.known_eavesdroppers)


def test_generate_different_seeds_differ():
    spec = ScenarioSpec(n_uav=6, n_eaves_known=3, n_eaves_unknown=1)
    a = generate_scenario(7, spec)
    b = generate_scenario(8, spec)
    assert not scenarios_equal(a, b)


def test_generate_tight_box_respects_spacing():
    spec = ScenarioSpec(
        n_uav=2, area_side=0.6, swarm_separation=5000.0, d_min=0.5,
        n_eaves_known=1, n_eaves_unknown=0,
    )
    s = generate_scenario(7, spec)
    for positions in s.swarm_initial_positions:
        assert pairwise_min_distance(positions) >= 0.5


def test_placement_budget_exhausted():
    spec = ScenarioSpec(
        n_uav=30, area_side=0.6, altitude_lo=70.0, altitude_hi=70.01,
        swarm_separation=5000.0, d_min=0.5,
    )
    with pytest.raises(PlacementBudgetError):
        generate_scenario(1, spec)


def test_eavesdroppers_on_ground_and_disjoint():
    spec = ScenarioSpec(n_uav=4, n_eaves_known=5, n_eaves_unknown=5)
    s = generate_scenario(3, spec)
    assert np.all(s.known_eavesdroppers[:, 2] == 0.0)
    assert np.all(s.unknown_eavesdroppers[:, 2] == 0.0)
    known = {tuple(row) for row in s.known_eavesdroppers}
    unknown = {tuple(row) for row in s.unknown_eavesdroppers}
    assert not known & unknown


def test_invariants_hold_over_many_seeds():
    spec = ScenarioSpec(n_uav=5, n_eaves_known=3, n_eaves_unknown=2)
    for seed in range(1000):
        s = generate_scenario(seed, spec)  # construction re-validates invariants
        assert s.area_bounds[0].disjoint_from(s.area_bounds[1])
        for i in (0, 1):
            assert s.area_bounds[i].contains(s.swarm_initial_positions[i])
            assert pairwise_min_distance(s.swarm_initial_positions[i]) >= s.d_min


def test_condition_vector_length():
    spec = ScenarioSpec(n_uav=16, n_eaves_known=4, n_eaves_unknown=2)
    s = generate_scenario(7, spec)
    assert condition_vector(s).shape == (3 * 32 + 2 * 4,) == (104,)


def test_condition_vector_min_corner_maps_to_zero():
    spec = ScenarioSpec(n_uav=2, n_eaves_known=1, n_eaves_unknown=0)
    s = generate_scenario(1, spec)
    box = s.area_bounds[0]
    positions = s.swarm_initial_positions[0].copy()
    positions[0] = [box.x_lo, box.y_lo, box.z_lo]
    # keep the spacing invariant intact
    positions[1] = [box.x_hi, box.y_hi, box.z_hi]
    s2 = dataclasses.replace(s, swarm_initial_positions=(positions, s.swarm_initial_positions[1]))
    vec = condition_vector(s2)
    assert np.allclose(vec[:3], 0.0)
    assert np.allclose(vec[3:6], 1.0)


def test_condition_vector_within_unit_interval():
    spec = ScenarioSpec(n_uav=6, n_eaves_known=4, n_eaves_unknown=2)
    for seed in range(25):
        vec = condition_vector(generate_scenario(seed, spec))
        assert np.all(vec >= 0.0) and np.all(vec <= 1.0)


def test_condition_vector_inverse_recovers_coordinates():
    spec = ScenarioSpec(n_uav=6, n_eaves_known=4, n_eaves_unknown=1)
    s = generate_scenario(11, spec)
    p1, p2, eaves_xy = condition_vector_inverse(s, condition_vector(s))
    assert np.allclose(p1, s.swarm_initial_positions[0], rtol=1e-9, atol=1e-9)
    assert np.allclose(p2, s.swarm_initial_positions[1], rtol=1e-9, atol=1e-9)
    assert np.allclose(eaves_xy, s.known_eavesdroppers[:, :2], rtol=1e-9, atol=1e-6)


def test_save_load_roundtrip(tmp_path):
    spec = ScenarioSpec(n_uav=16, n_eaves_known=4, n_eaves_unknown=2)
    s = generate_scenario(7, spec)
    path = tmp_path / "scenario.json"
    save_scenario(s, path)
    loaded = load_scenario(path)
    assert scenarios_equal(s, loaded)
    assert loaded.rng_seed == 7


def test_load_rejects_spacing_violation(tmp_path):
    spec = ScenarioSpec(n_uav=2, n_eaves_known=1, n_eaves_unknown=0)
    s = generate_scenario(1, spec)
    doc = scenario_to_dict(s)
    doc["swarm_initial_positions"][0][1] = doc["swarm_initial_positions"][0][0]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ScenarioInvariantError):
        load_scenario(path)


def test_load_rejects_unknown_schema_version(tmp_path):
    spec = ScenarioSpec(n_uav=2, n_eaves_known=1, n_eaves_unknown=0)
    doc = scenario_to_dict(generate_scenario(1, spec))
    doc["schema_version"] = 99
    path = tmp_path / "versioned.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaVersionError):
        load_scenario(path)


def test_overlapping_boxes_rejected():
    spec = ScenarioSpec(n_uav=2, n_eaves_known=0, n_eaves_unknown=0)
    s = generate_scenario(1, spec)
    with pytest.raises(ScenarioInvariantError):
        dataclasses.replace(s, area_bounds=(s.area_bounds[0], s.area_bounds[0]))


def test_channel_preset_values():
    p = urban_default_channel()
    assert p.b1 == 9.61 and p.b2 == 0.16
    assert math.isclose(p.noise_power, 1e-12)
    assert math.isclose(p.wavelength, 299792458.0 / 915e6)
    assert math.isclose(p.k0, (p.wavelength / (4 * math.pi)) ** 2)
    assert math.isclose(p.mu_nlos / p.mu_los, 10 ** (19 / 10))


def test_box_validation():
    with pytest.raises(ScenarioInvariantError):
        Box(0, 0, 0, 1, 0, 1)

"""Decision variables, three-objective evaluation, constraint repair.

A solution bundles the post-move aircraft positions of both swarms, their
excitation weights and one receiver pick per transmission direction. The
three objectives are stored in minimization form:

    g1 = -(known secrecy capacity)      [-bps]
    g2 = worst max-sidelobe ratio       [linear]
    g3 = total repositioning energy     [J]

``g2`` stays a linear ratio internally; dB conversion (20 log10) belongs to
reporting. Constraint handling is repair plus death penalty: candidates the
repair cannot fix are flagged infeasible and never enter an archive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import channel as channel_mod
from .beamforming import (
    AngularGrid,
    ArrayState,
    antenna_gain,
    direction_and_distance,
    evaluate_pattern,
    max_sidelobe_ratio,
    precompute_sphere,
)
from .channel import SecrecyReport
from .energy import max_range_speed, swarm_reposition_energy
from .scenario import Scenario, ScenarioError

SOLUTION_SCHEMA_VERSION = 1
DEFAULT_EXCLUSION_HALF_ANGLE = math.radians(1.0)


class InfeasibleSolutionError(ValueError):
    """Raised when evaluation is asked to score an unrepaired solution."""


@dataclass(eq=False)
class Solution:
    """Positions (2, n, 3), weights (2, n) and receiver indices (2,).

    ``receivers[i]`` indexes the aircraft of the *other* swarm that
    direction ``i`` transmits to. Instances are treated as immutable;
    operators copy before mutating.
    """

    positions: np.ndarray
    weights: np.ndarray
    receivers: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.receivers = np.asarray(self.receivers, dtype=int).ravel()
        if self.positions.ndim != 3 or self.positions.shape[0] != 2 or self.positions.shape[2] != 3:
            raise ValueError(f"positions must have shape (2, n, 3), got {self.positions.shape}")
        if self.weights.shape != self.positions.shape[:2]:
            raise ValueError("weights must have shape (2, n)")
        if self.receivers.shape != (2,):
            raise ValueError("exactly one receiver index per direction")

    @property
    def n_uav(self) -> int:
        return self.positions.shape[1]

    def copy(self) -> "Solution":
        return Solution(self.positions.copy(), self.weights.copy(), self.receivers.copy())

    def equals(self, other: "Solution") -> bool:
        return (
            np.array_equal(self.positions, other.positions)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.receivers, other.receivers)
        )


@dataclass(frozen=True)
class ObjectiveVector:
    """The three objectives, minimization form."""

    g1: float  # -(known secrecy capacity), -bps
    g2: float  # worst sidelobe ratio, linear
    g3: float  # repositioning energy, J

    def __post_init__(self):
        if not all(np.isfinite(v) for v in (self.g1, self.g2, self.g3)):
            raise ValueError(f"objectives must be finite, got {self}")
        if self.g3 < 0:
            raise ValueError("energy objective cannot be negative")

    def __iter__(self):
        return iter((self.g1, self.g2, self.g3))

    def as_array(self) -> np.ndarray:
        return np.array([self.g1, self.g2, self.g3])

    # reporting units
    @property
    def f1_bps(self) -> float:
        return -self.g1

    @property
    def f2_db(self) -> float:
        return 20.0 * math.log10(self.g2) if self.g2 > 0 else -math.inf

    @property
    def f3_joule(self) -> float:
        return self.g3


def is_feasible(x: Solution, s: Scenario, tol: float = 1e-9) -> bool:
    if x.positions.shape[1] != s.n_uav:
        return False
    for i in (0, 1):
        box = s.area_bounds[i]
        if not box.contains(x.positions[i], tol):
            return False
        if _closest_pair(x.positions[i])[0] < s.d_min - tol:
            return False
    if np.any(x.weights < -tol) or np.any(x.weights > 1 + tol):
        return False
    if np.any(x.receivers < 0) or np.any(x.receivers >= s.n_uav):
        return False
    return True


def _closest_pair(points: np.ndarray) -> tuple[float, int, int]:
    n = len(points)
    diff = points[:, None, :] - points[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    dist[np.eye(n, dtype=bool)] = np.inf
    flat = int(np.argmin(dist))
    j, k = divmod(flat, n)
    return float(dist[j, k]), j, k


def repair(x: Solution, s: Scenario, max_sweeps: int | None = None) -> tuple[Solution, bool]:
    """Clamp box/weight/index violations, push colliding pairs apart.

    Returns ``(solution, feasible)``. A feasible input is returned
    unchanged (same object). Collision repair moves the closest violating
    pair symmetrically apart along their axis, re-clamping to the box, for
    a bounded number of sweeps; if separation still fails the result is
    flagged infeasible (death penalty downstream).
    """
    if is_feasible(x, s):
        return x, True
    out = x.copy()
    np.clip(out.weights, 0.0, 1.0, out=out.weights)
    np.clip(out.receivers, 0, s.n_uav - 1, out=out.receivers)
    budget = max_sweeps if max_sweeps is not None else 50 * s.n_uav
    for i in (0, 1):
        box = s.area_bounds[i]
        out.positions[i] = box.clamp(out.positions[i])
        for sweep in range(budget):
            dist, j, k = _closest_pair(out.positions[i])
            if dist >= s.d_min:
                break
            a, b = out.positions[i, j], out.positions[i, k]
            axis = b - a
            norm = np.linalg.norm(axis)
            if norm < 1e-12:
                # coincident pair: separate along a fixed axis, cycling to
                # escape repeated clamping against the same wall
                axis = np.zeros(3)
                axis[sweep % 3] = 1.0
                norm = 1.0
            step = (s.d_min - dist) / 2.0 + 1e-9
            shift = axis / norm * step
            out.positions[i, j] = box.clamp(a - shift)
            out.positions[i, k] = box.clamp(b + shift)
    return out, is_feasible(out, s)


class ObjectiveEvaluator:
    """Caches the per-scenario constants one evaluation needs.

    ``base_grid`` supplies the coarse sphere resolution; around each
    array's target direction a refinement window of ``window_half_angle``
    at ``window_fine_resolution`` is opened so near-in sidelobes are
    resolved. Evaluation is pure and deterministic.
    """

    def __init__(
        self,
        scenario: Scenario,
        base_grid: AngularGrid,
        window_half_angle: float = math.radians(2.0),
        window_fine_resolution: float = math.radians(0.05),
        exclusion_half_angle: float = DEFAULT_EXCLUSION_HALF_ANGLE,
    ):
        self.scenario = scenario
        self.base_grid = base_grid
        self.window_half_angle = window_half_angle
        self.window_fine_resolution = window_fine_resolution
        self.exclusion_half_angle = exclusion_half_angle
        self.cruise_speed = max_range_speed(scenario.energy)
        self.sphere = precompute_sphere(base_grid.theta_resolution, base_grid.phi_resolution)
        self.evaluations = 0

    def evaluate_full(
        self, x: Solution, phases=None
    ) -> tuple[ObjectiveVector, SecrecyReport]:
        """Score a feasible solution; optional per-element phase offsets.

        ``phases`` (two arrays, one per swarm) models imperfect carrier
        alignment in robustness studies; it affects g1 and g2 but not the
        repositioning energy.
        """
        s = self.scenario
        if not is_feasible(x, s):
            raise InfeasibleSolutionError("refusing to evaluate an unrepaired solution")
        self.evaluations += 1
        p = s.channel
        r_a2a, r_known, r_all, sll = [], [], [], []
        for i in (0, 1):
            state = ArrayState(
                positions=x.positions[i],
                weights=x.weights[i],
                phases=None if phases is None else phases[i],
            )
            receiver = x.positions[1 - i][x.receivers[i]]
            target, dist = direction_and_distance(state.center, receiver)
            grid = self.base_grid.with_window(
                target, self.window_half_angle, self.window_fine_resolution
            )
            pattern = evaluate_pattern(
                state, p.wavelength, grid, p.element_pattern, sphere=self.sphere
            )
            gain = antenna_gain(
                state, target, p.wavelength, p.efficiency, grid,
                element_pattern=p.element_pattern, pattern=pattern,
            )
            r_a2a.append(channel_mod.a2a_rate(p.tx_power[i], gain, dist, p))
            known = channel_mod.array_eavesdropper_snrs(
                state, s.known_eavesdroppers, p.tx_power[i], p, grid, pattern
            )
            unknown = channel_mod.array_eavesdropper_snrs(
                state, s.unknown_eavesdroppers, p.tx_power[i], p, grid, pattern
            )
            r_known.append(channel_mod.colluded_rate(known, p.bandwidth))
            r_all.append(channel_mod.colluded_rate(known + unknown, p.bandwidth))
            sll.append(
                max_sidelobe_ratio(
                    state, target, p.wavelength, grid, self.exclusion_half_angle, pattern=pattern
                )
            )
        c_known = min(r_a2a[i] - r_known[i] for i in (0, 1))
        c_all = min(r_a2a[i] - r_all[i] for i in (0, 1))
        g3 = sum(
            swarm_reposition_energy(
                s.swarm_initial_positions[i], x.positions[i], s.energy, self.cruise_speed
            )
            for i in (0, 1)
        )
        report = SecrecyReport(
            r_a2a=tuple(r_a2a),
            r_eaves_known=tuple(r_known),
            r_eaves_all=tuple(r_all),
            c_known=c_known,
            c_achievable=c_all,
        )
        return ObjectiveVector(g1=-c_known, g2=max(sll), g3=g3), report

    def evaluate(self, x: Solution) -> ObjectiveVector:
        return self.evaluate_full(x)[0]


def evaluate(x: Solution, s: Scenario, grid: AngularGrid, **kwargs) -> ObjectiveVector:
    """One-shot evaluation; build an :class:`ObjectiveEvaluator` for loops."""
    return ObjectiveEvaluator(s, grid, **kwargs).evaluate(x)


# --- persistence ------------------------------------------------------------

def solution_to_dict(x: Solution) -> dict:
    return {
        "schema_version": SOLUTION_SCHEMA_VERSION,
        "kind": "solution",
        "positions_m": x.positions.tolist(),
        "weights": x.weights.tolist(),
        "receivers": x.receivers.tolist(),
    }


def solution_from_dict(data: dict) -> Solution:
    if not isinstance(data, dict) or data.get("kind") != "solution":
        raise ScenarioError("not a solution document")
    if data.get("schema_version") != SOLUTION_SCHEMA_VERSION:
        raise ScenarioError(f"solution schema {data.get('schema_version')!r} unsupported")
    return Solution(
        positions=np.array(data["positions_m"], dtype=float),
        weights=np.array(data["weights"], dtype=float),
        receivers=np.array(data["receivers"], dtype=int),
    )


def save_solution(x: Solution, path) -> None:
    with open(path, "w") as fh:
        json.dump(solution_to_dict(x), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_solution(path) -> Solution:
    with open(path) as fh:
        data = json.load(fh)
    return solution_from_dict(data)

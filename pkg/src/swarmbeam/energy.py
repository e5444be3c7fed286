"""Rotary-wing propulsion power and straight-line repositioning energy.

Level-flight power at speed ``v`` is the usual three-term rotary-wing
model: blade profile power growing with v^2, induced power decaying with
speed, and parasite drag growing with v^3,

    P(v) = P_B (1 + 3 v^2 / v_tip^2)
         + P_I (sqrt(1 + v^4 / (4 v_0^4)) - v^2 / (2 v_0^2))^(1/2)
         + (1/2) d_0 rho s A v^3.

A repositioning leg is flown in a straight line at a constant cruise speed,
starting and ending at rest, so the kinetic-energy term of the 3D
extension vanishes and only the time-integrated power plus the potential
energy change m g (h_end - h_start) remain. Descents are clamped at zero:
these platforms do not recover energy going down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import EnergyParams


@dataclass(frozen=True)
class FlightLeg:
    start: np.ndarray
    end: np.ndarray
    cruise_speed: float

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float).ravel())
        object.__setattr__(self, "end", np.asarray(self.end, dtype=float).ravel())
        if not (np.all(np.isfinite(self.start)) and np.all(np.isfinite(self.end))):
            raise ValueError("leg endpoints must be finite")
        if self.cruise_speed < 0:
            raise ValueError("cruise speed must be non-negative")


def propulsion_power(v: float, e: EnergyParams) -> float:
    """Level-flight propulsion power in watts at speed ``v`` >= 0."""
    if v < 0:
        raise ValueError("speed must be non-negative")
    v2 = v * v
    blade = e.blade_power * (1.0 + 3.0 * v2 / (e.tip_speed ** 2))
    v0_2 = e.hover_induced_velocity ** 2
    inner = math.sqrt(1.0 + v2 * v2 / (4.0 * v0_2 * v0_2)) - v2 / (2.0 * v0_2)
    induced = e.induced_power * math.sqrt(max(inner, 0.0))
    parasite = 0.5 * e.drag_ratio * e.air_density * e.solidity * e.disc_area * v2 * v
    return blade + induced + parasite


def max_range_speed(e: EnergyParams, tol: float = 1e-4) -> float:
    """Speed minimizing energy per metre, P(v) / v.

    Golden-section search on [0.1, tip_speed]; deterministic to ``tol``
    metres per second.
    """
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 0.1, e.tip_speed
    a = hi - inv_phi * (hi - lo)
    b = lo + inv_phi * (hi - lo)
    fa = propulsion_power(a, e) / a
    fb = propulsion_power(b, e) / b
    while hi - lo > tol:
        if fa < fb:
            hi, b, fb = b, a, fa
            a = hi - inv_phi * (hi - lo)
            fa = propulsion_power(a, e) / a
        else:
            lo, a, fa = a, b, fb
            b = lo + inv_phi * (hi - lo)
            fb = propulsion_power(b, e) / b
    return 0.5 * (lo + hi)


def leg_energy(leg: FlightLeg, e: EnergyParams) -> float:
    """Energy in joules for one rest-to-rest straight-line leg, clamped >= 0."""
    delta = leg.end - leg.start
    distance = float(np.linalg.norm(delta))
    if distance == 0.0:
        return 0.0
    if leg.cruise_speed == 0.0:
        raise ValueError("zero cruise speed with non-zero displacement")
    duration = distance / leg.cruise_speed
    potential = e.mass * e.gravity * float(delta[2])
    return max(propulsion_power(leg.cruise_speed, e) * duration + potential, 0.0)


def swarm_reposition_energy(
    initial: np.ndarray, final: np.ndarray, e: EnergyParams, cruise_speed: float | None = None
) -> float:
    """Total energy to move every aircraft from ``initial`` to ``final`` rows.

    Vectorized form of summing :func:`leg_energy` over the rows.
    """
    v = max_range_speed(e) if cruise_speed is None else cruise_speed
    initial = np.asarray(initial, dtype=float).reshape(-1, 3)
    final = np.asarray(final, dtype=float).reshape(-1, 3)
    delta = final - initial
    distance = np.linalg.norm(delta, axis=1)
    moving = distance > 0.0
    if not np.any(moving):
        return 0.0
    if v == 0.0:
        raise ValueError("zero cruise speed with non-zero displacement")
    power = propulsion_power(v, e)
    per_leg = power * distance[moving] / v + e.mass * e.gravity * delta[moving, 2]
    return float(np.sum(np.maximum(per_leg, 0.0)))

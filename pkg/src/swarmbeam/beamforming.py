"""Virtual antenna array geometry: array factor, directive gain, sidelobes.

The swarm acts as one distributed transmit array. For element positions
``p_j`` (taken relative to the array centre), weights ``w_j`` in [0, 1] and
initial phases ``Phi_j``, the array factor toward direction ``(theta, phi)``
is the phasor sum

    AF(theta, phi) = sum_j w_j * exp(i * [k * (p_j . u(theta, phi)) + Phi_j])

with ``k = 2 pi / wavelength`` and ``u`` the unit vector of the direction
(theta measured from +z, phi = atan2(y, x)). Directive gain divides the
target-direction power by the total radiated power, obtained here by
midpoint quadrature on a sphere grid that can be locally refined around the
mainlobe. All functions are pure; results do not depend on evaluation
order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

DEG = math.pi / 180.0
_CHUNK = 200_000  # directions per block when sweeping large grids


class DegenerateArrayError(ValueError):
    """Raised when every element weight is zero (no radiated power)."""


class CoincidentPointsError(ValueError):
    """Raised when a direction between two identical points is requested."""


@dataclass(frozen=True)
class SphericalDirection:
    """Elevation-from-zenith / azimuth pair in radians."""

    theta: float
    phi: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= math.pi):
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        if not (-math.pi <= self.phi <= math.pi):
            raise ValueError(f"phi must lie in [-pi, pi], got {self.phi}")

    def unit_vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])


@dataclass
class ArrayState:
    """Element positions (absolute), weights and initial phases of one array."""

    positions: np.ndarray          # (n, 3) metres
    weights: np.ndarray            # (n,) in [0, 1]
    phases: np.ndarray | None = None  # (n,) radians, default all zero
    center: np.ndarray | None = None  # default: arithmetic mean of positions

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        n = len(self.positions)
        if self.phases is None:
            self.phases = np.zeros(n)
        else:
            self.phases = np.asarray(self.phases, dtype=float).ravel()
        if len(self.weights) != n or len(self.phases) != n:
            raise ValueError("positions, weights and phases must have equal length")
        if np.any(self.weights < -1e-12) or np.any(self.weights > 1 + 1e-12):
            raise ValueError("weights must lie in [0, 1]")
        if not np.all(np.isfinite(self.phases)):
            raise ValueError("phases must be finite")
        if self.center is None:
            self.center = self.positions.mean(axis=0)
        else:
            self.center = np.asarray(self.center, dtype=float).ravel()

    @property
    def relative_positions(self) -> np.ndarray:
        return self.positions - self.center


def direction_and_distance(p_from, p_to) -> tuple[SphericalDirection, float]:
    """Direction (from +z axis / atan2 azimuth) and Euclidean distance."""
    delta = np.asarray(p_to, dtype=float) - np.asarray(p_from, dtype=float)
    dist = float(np.linalg.norm(delta))
    if dist == 0.0:
        raise CoincidentPointsError("direction between coincident points is undefined")
    theta = math.acos(min(1.0, max(-1.0, delta[2] / dist)))
    phi = math.atan2(delta[1], delta[0])
    return SphericalDirection(theta, phi), dist


def array_factor(state: ArrayState, direction: SphericalDirection, wavelength: float) -> complex:
    """Complex array factor toward one direction."""
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    k = 2.0 * math.pi / wavelength
    u = direction.unit_vector()
    phase = k * (state.relative_positions @ u) + state.phases
    return complex(np.sum(state.weights * np.exp(1j * phase)))


def direction_units(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """(n, 3) unit vectors for direction arrays."""
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=1)


def _af_magnitudes_units(state: ArrayState, wavelength: float, units: np.ndarray) -> np.ndarray:
    """|AF| over precomputed direction unit vectors, in blocks to bound memory."""
    k = 2.0 * math.pi / wavelength
    rel = state.relative_positions
    out = np.empty(len(units))
    for start in range(0, len(units), _CHUNK):
        sl = slice(start, start + _CHUNK)
        phase = k * (units[sl] @ rel.T) + state.phases
        # real/imag parts separately: cheaper than complex exponentials
        out[sl] = np.hypot(np.cos(phase) @ state.weights, np.sin(phase) @ state.weights)
    return out


def _af_magnitudes(
    state: ArrayState, wavelength: float, theta: np.ndarray, phi: np.ndarray
) -> np.ndarray:
    return _af_magnitudes_units(state, wavelength, direction_units(theta, phi))


# --- sphere grids -----------------------------------------------------------

@dataclass(frozen=True)
class RefinementWindow:
    """Local subdivision around one direction (mainlobe bookkeeping)."""

    direction: SphericalDirection
    half_angle: float      # radians, great-circle radius of the window
    fine_resolution: float  # radians

    def __post_init__(self):
        if not self.half_angle > self.fine_resolution > 0:
            raise ValueError("window needs half_angle > fine_resolution > 0")


@dataclass(frozen=True)
class AngularGrid:
    """Midpoint sphere grid with an optional refinement window.

    Coarse cells whose centre lies within ``half_angle`` (plus half a cell
    diagonal) of the window direction are subdivided down to the fine
    resolution, so the quadrature stays a single non-overlapping partition
    of the sphere.
    """

    theta_resolution: float  # radians
    phi_resolution: float    # radians
    window: RefinementWindow | None = None

    def __post_init__(self):
        if self.theta_resolution <= 0 or self.phi_resolution <= 0:
            raise ValueError("grid resolutions must be positive")

    @classmethod
    def from_degrees(
        cls,
        resolution_deg: float,
        window_half_angle_deg: float | None = None,
        window_fine_deg: float | None = None,
        window_direction: SphericalDirection | None = None,
    ) -> "AngularGrid":
        window = None
        if window_half_angle_deg is not None and window_direction is not None:
            window = RefinementWindow(
                window_direction, window_half_angle_deg * DEG, window_fine_deg * DEG
            )
        return cls(resolution_deg * DEG, resolution_deg * DEG, window)

    def with_window(
        self, direction: SphericalDirection, half_angle: float, fine_resolution: float
    ) -> "AngularGrid":
        return replace(
            self, window=RefinementWindow(direction, half_angle, fine_resolution)
        )

    def cells(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (theta, phi, quadrature weight) for every cell midpoint.

        Weights are sin(theta) * dtheta * dphi of the owning cell, so
        ``sum(f * weight)`` is the midpoint rule for
        ``integral f sin(theta) dtheta dphi`` over the sphere.
        """
        sphere = precompute_sphere(self.theta_resolution, self.phi_resolution)
        theta, phi, weight, _units = partition_with_window(sphere, self.window)
        return theta, phi, weight


@dataclass(frozen=True)
class SphereGrid:
    """Precomputed coarse sphere partition, reusable across pattern sweeps."""

    theta: np.ndarray
    phi: np.ndarray
    weight: np.ndarray
    units: np.ndarray
    d_theta: float
    d_phi: float


def precompute_sphere(theta_resolution: float, phi_resolution: float) -> SphereGrid:
    n_th = max(1, round(math.pi / theta_resolution))
    n_ph = max(1, round(2.0 * math.pi / phi_resolution))
    d_th = math.pi / n_th
    d_ph = 2.0 * math.pi / n_ph
    th = (np.arange(n_th) + 0.5) * d_th
    ph = -math.pi + (np.arange(n_ph) + 0.5) * d_ph
    th_grid, ph_grid = np.meshgrid(th, ph, indexing="ij")
    theta = th_grid.ravel()
    phi = ph_grid.ravel()
    return SphereGrid(
        theta=theta,
        phi=phi,
        weight=np.sin(theta) * d_th * d_ph,
        units=direction_units(theta, phi),
        d_theta=d_th,
        d_phi=d_ph,
    )


def partition_with_window(
    sphere: SphereGrid, window: RefinementWindow | None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sphere partition with window cells subdivided; no overlaps.

    Coarse cells whose centre lies within ``half_angle`` plus half a cell
    diagonal of the window direction are replaced by their fine subcells,
    so weights still sum to 4 pi.
    """
    if window is None:
        return sphere.theta, sphere.phi, sphere.weight, sphere.units
    target = window.direction.unit_vector()
    cap = window.half_angle + 0.5 * math.hypot(sphere.d_theta, sphere.d_phi)
    refine = sphere.units @ target >= math.cos(min(cap, math.pi))

    m_th = max(1, round(sphere.d_theta / window.fine_resolution))
    m_ph = max(1, round(sphere.d_phi / window.fine_resolution))
    f_th = sphere.d_theta / m_th
    f_ph = sphere.d_phi / m_ph
    sub_th = (np.arange(m_th) + 0.5) * f_th - sphere.d_theta / 2.0
    sub_ph = (np.arange(m_ph) + 0.5) * f_ph - sphere.d_phi / 2.0
    off_th, off_ph = np.meshgrid(sub_th, sub_ph, indexing="ij")
    fine_theta = (sphere.theta[refine][:, None] + off_th.ravel()[None, :]).ravel()
    fine_phi = (sphere.phi[refine][:, None] + off_ph.ravel()[None, :]).ravel()
    fine_w = np.sin(fine_theta) * f_th * f_ph

    theta = np.concatenate([sphere.theta[~refine], fine_theta])
    phi = np.concatenate([sphere.phi[~refine], fine_phi])
    weight = np.concatenate([sphere.weight[~refine], fine_w])
    units = np.concatenate([sphere.units[~refine], direction_units(fine_theta, fine_phi)])
    return theta, phi, weight, units


@dataclass
class PatternEvaluation:
    """|AF| sampled over one grid plus the radiated-power integral."""

    theta: np.ndarray
    phi: np.ndarray
    weight: np.ndarray
    magnitude: np.ndarray
    power_integral: float  # integral of |AF|^2 w^2 sin(theta) dtheta dphi
    units: np.ndarray | None = None


def evaluate_pattern(
    state: ArrayState,
    wavelength: float,
    grid: AngularGrid,
    element_pattern=None,
    sphere: SphereGrid | None = None,
) -> PatternEvaluation:
    """Sample |AF| over the grid; pass a precomputed ``sphere`` in loops."""
    if sphere is None:
        sphere = precompute_sphere(grid.theta_resolution, grid.phi_resolution)
    theta, phi, weight, units = partition_with_window(sphere, grid.window)
    mag = _af_magnitudes_units(state, wavelength, units)
    if element_pattern is not None:
        mag = mag * np.asarray(element_pattern(theta, phi), dtype=float)
    integral = float(np.sum(mag * mag * weight))
    return PatternEvaluation(theta, phi, weight, mag, integral, units)


def antenna_gain(
    state: ArrayState,
    target: SphericalDirection,
    wavelength: float,
    efficiency: float,
    grid: AngularGrid,
    element_pattern=None,
    pattern: PatternEvaluation | None = None,
) -> float:
    """Directive gain toward ``target`` (linear, dimensionless).

    ``4 pi |AF|^2 w^2 * efficiency`` over the radiated-power integral. Pass
    a precomputed ``pattern`` to reuse the integral across many targets of
    the same array state.
    """
    if np.all(state.weights == 0.0):
        raise DegenerateArrayError("all element weights are zero")
    if pattern is None:
        pattern = evaluate_pattern(state, wavelength, grid, element_pattern)
    if pattern.power_integral <= 0.0:
        raise DegenerateArrayError("radiated power integral vanished")
    af = abs(array_factor(state, target, wavelength))
    w = 1.0
    if element_pattern is not None:
        w = float(np.asarray(element_pattern(np.array([target.theta]), np.array([target.phi]))).ravel()[0])
    return 4.0 * math.pi * (af * w) ** 2 * efficiency / pattern.power_integral


def max_sidelobe_ratio(
    state: ArrayState,
    target: SphericalDirection,
    wavelength: float,
    grid: AngularGrid,
    exclusion_half_angle: float,
    pattern: PatternEvaluation | None = None,
) -> float:
    """Largest |AF| outside the mainlobe cone, relative to |AF(target)|.

    Linear ratio; report in dB as ``20 log10``. The mainlobe is excluded as
    a great-circle cone of ``exclusion_half_angle`` radians around the
    target.
    """
    af_target = abs(array_factor(state, target, wavelength))
    if af_target == 0.0:
        raise DegenerateArrayError("array factor vanishes toward the target")
    if pattern is None:
        pattern = evaluate_pattern(state, wavelength, grid)
    u = target.unit_vector()
    units = pattern.units
    if units is None:
        units = direction_units(pattern.theta, pattern.phi)
    outside = units @ u < math.cos(exclusion_half_angle)
    if not np.any(outside):
        raise ValueError("exclusion cone covers the whole grid")
    return float(np.max(pattern.magnitude[outside]) / af_target)

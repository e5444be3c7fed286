"""Problem instances: swarm geometry, eavesdroppers, channel and energy constants.

A :class:`Scenario` bundles every environment factor the rest of the library
consumes: initial positions of the two swarms, their reachable boxes, ground
eavesdropper locations (a known list visible to the optimizer and an unknown
list used only for after-the-fact evaluation), and the channel/energy
parameter sets. Instances are immutable and fully determined by
``(seed, spec)``.

Default channel and energy constants are library defaults chosen from
standard models in the literature; every one of them can be overridden
through :class:`ChannelParams` / :class:`EnergyParams`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .rng import SCENARIO_STREAM, stream

SCHEMA_VERSION = 1
SPEED_OF_LIGHT = 299_792_458.0


class ScenarioError(ValueError):
    """Base class for scenario construction and IO failures."""


class ScenarioInvariantError(ScenarioError):
    """A scenario violates one of its structural invariants."""


class PlacementBudgetError(ScenarioError):
    """Rejection sampling could not satisfy the separation constraint."""


class SchemaVersionError(ScenarioError):
    """A persisted file declares a schema this build does not understand."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned reachable region, altitude included."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    z_lo: float
    z_hi: float

    def __post_init__(self):
        if not (self.x_lo < self.x_hi and self.y_lo < self.y_hi and self.z_lo < self.z_hi):
            raise ScenarioInvariantError(f"degenerate box {self}")

    @property
    def lo(self) -> np.ndarray:
        return np.array([self.x_lo, self.y_lo, self.z_lo])

    @property
    def hi(self) -> np.ndarray:
        return np.array([self.x_hi, self.y_hi, self.z_hi])

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> bool:
        pts = np.atleast_2d(points)
        return bool(np.all(pts >= self.lo - tol) and np.all(pts <= self.hi + tol))

    def clamp(self, points: np.ndarray) -> np.ndarray:
        return np.clip(points, self.lo, self.hi)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lo + rng.random((n, 3)) * (self.hi - self.lo)

    def disjoint_from(self, other: "Box") -> bool:
        # Axis-aligned boxes are disjoint iff they are separated on some axis.
        return (
            self.x_hi < other.x_lo or other.x_hi < self.x_lo
            or self.y_hi < other.y_lo or other.y_hi < self.y_lo
            or self.z_hi < other.z_lo or other.z_hi < self.z_lo
        )


@dataclass(frozen=True)
class ChannelParams:
    """Link-budget constants shared by both transmission directions.

    ``tx_power`` holds the total transmit power of each swarm in watts.
    ``mu_los`` / ``mu_nlos`` are linear excess-attenuation factors (>= 1
    means loss) applied to ground links; ``b1``/``b2`` shape the
    elevation-dependent line-of-sight probability and are calibrated for
    elevation angles expressed in degrees.
    """

    wavelength: float
    bandwidth: float
    tx_power: tuple[float, float]
    k0: float
    alpha: float
    noise_power: float
    b1: float
    b2: float
    mu_los: float
    mu_nlos: float
    efficiency: float
    element_pattern: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        positives = {
            "wavelength": self.wavelength,
            "bandwidth": self.bandwidth,
            "k0": self.k0,
            "noise_power": self.noise_power,
            "mu_los": self.mu_los,
            "mu_nlos": self.mu_nlos,
        }
        for name, value in positives.items():
            if not (np.isfinite(value) and value > 0):
                raise ScenarioInvariantError(f"{name} must be finite and > 0, got {value}")
        if len(self.tx_power) != 2 or any(p <= 0 for p in self.tx_power):
            raise ScenarioInvariantError(f"tx_power must be two positive watts, got {self.tx_power}")
        if self.alpha < 1:
            raise ScenarioInvariantError(f"path-loss exponent must be >= 1, got {self.alpha}")
        if not 0 <= self.efficiency <= 1:
            raise ScenarioInvariantError(f"efficiency must lie in [0, 1], got {self.efficiency}")


def urban_default_channel(
    frequency_hz: float = 915e6,
    tx_power_w: float = 0.1,
    bandwidth_hz: float = 1e6,
) -> ChannelParams:
    """The ``urban-default`` preset.

    915 MHz carrier, 1 MHz bandwidth, -90 dBm noise floor, free-space
    reference loss at 1 m, logistic LoS model with the usual urban constants
    (b1 = 9.61, b2 = 0.16), 1 dB / 20 dB LoS/NLoS excess attenuation.
    These are library defaults, not measured values; override per field
    as needed.
    """
    wavelength = SPEED_OF_LIGHT / frequency_hz
    return ChannelParams(
        wavelength=wavelength,
        bandwidth=bandwidth_hz,
        tx_power=(tx_power_w, tx_power_w),
        k0=(wavelength / (4.0 * math.pi)) ** 2,
        alpha=2.0,
        noise_power=10 ** (-90.0 / 10.0) * 1e-3,  # -90 dBm in watts
        b1=9.61,
        b2=0.16,
        mu_los=10 ** (1.0 / 10.0),
        mu_nlos=10 ** (20.0 / 10.0),
        efficiency=0.8,
    )


CHANNEL_PRESETS = {"urban-default": urban_default_channel}


@dataclass(frozen=True)
class EnergyParams:
    """Rotary-wing propulsion constants (standard parameter set)."""

    blade_power: float = 79.86        # blade profile power in hover, W
    induced_power: float = 88.63      # induced power in hover, W
    tip_speed: float = 120.0          # rotor tip speed, m/s
    hover_induced_velocity: float = 4.03  # mean rotor induced velocity, m/s
    drag_ratio: float = 0.6           # fuselage drag ratio
    solidity: float = 0.05            # rotor solidity
    air_density: float = 1.225        # kg/m^3
    disc_area: float = 0.503          # rotor disc area, m^2
    mass: float = 2.0                 # airframe mass, kg
    gravity: float = 9.8              # m/s^2

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not (np.isfinite(value) and value > 0):
                raise ScenarioInvariantError(f"{name} must be finite and > 0, got {value}")


@dataclass(frozen=True)
class ScenarioSpec:
    """Generator inputs; see :func:`generate_scenario`."""

    n_uav: int = 16
    n_eaves_known: int = 4
    n_eaves_unknown: int = 2
    swarm_separation: float = 5000.0
    area_side: float = 100.0
    altitude_lo: float = 70.0
    altitude_hi: float = 120.0
    d_min: float = 0.5
    eaves_radius: float | None = None  # default: separation / 2 + area_side
    channel: ChannelParams = field(default_factory=urban_default_channel)
    energy: EnergyParams = field(default_factory=EnergyParams)

    def __post_init__(self):
        if self.n_uav < 2:
            raise ScenarioInvariantError("need at least two aircraft per swarm")
        if self.n_eaves_known < 0 or self.n_eaves_unknown < 0:
            raise ScenarioInvariantError("eavesdropper counts must be non-negative")
        if self.swarm_separation <= self.area_side:
            raise ScenarioInvariantError("swarm areas would overlap")
        if not self.altitude_lo < self.altitude_hi:
            raise ScenarioInvariantError("empty altitude range")


@dataclass(frozen=True)
class Scenario:
    """An immutable problem instance.

    ``known_eavesdroppers`` are visible to the optimizer; the unknown list
    exists only so evaluation can report the achievable (as opposed to the
    optimized) secrecy capacity. ``eaves_extent`` is the declared horizontal
    envelope all eavesdroppers were drawn from and fixes the normalization
    used by :func:`condition_vector`.
    """

    swarm_initial_positions: tuple[np.ndarray, np.ndarray]
    area_bounds: tuple[Box, Box]
    known_eavesdroppers: np.ndarray
    unknown_eavesdroppers: np.ndarray
    channel: ChannelParams
    energy: EnergyParams
    d_min: float
    rng_seed: int
    eaves_extent: tuple[float, float, float, float]  # x_lo, x_hi, y_lo, y_hi

    def __post_init__(self):
        swarms = tuple(
            np.ascontiguousarray(np.asarray(p, dtype=float)) for p in self.swarm_initial_positions
        )
        for arr in swarms:
            arr.flags.writeable = False
        object.__setattr__(self, "swarm_initial_positions", swarms)
        object.__setattr__(self, "area_bounds", tuple(self.area_bounds))
        object.__setattr__(self, "eaves_extent", tuple(float(v) for v in self.eaves_extent))
        for name in ("known_eavesdroppers", "unknown_eavesdroppers"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=float)).reshape(-1, 3)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        self._validate()

    def _validate(self):
        p1, p2 = self.swarm_initial_positions
        b1, b2 = self.area_bounds
        if p1.shape != p2.shape or p1.ndim != 2 or p1.shape[1] != 3:
            raise ScenarioInvariantError("swarms must hold equally many (x, y, z) rows")
        if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(p2))):
            raise ScenarioInvariantError("non-finite initial position")
        if np.any(p1[:, 2] < 0) or np.any(p2[:, 2] < 0):
            raise ScenarioInvariantError("aircraft below ground")
        if not b1.disjoint_from(b2):
            raise ScenarioInvariantError("swarm areas overlap")
        for pts, box, label in ((p1, b1, "swarm 1"), (p2, b2, "swarm 2")):
            if not box.contains(pts):
                raise ScenarioInvariantError(f"{label} initial positions leave the reachable box")
            if len(pts) >= 2 and _min_pairwise_distance(pts) < self.d_min - 1e-9:
                raise ScenarioInvariantError(f"{label} initial positions violate d_min")
        for eaves, label in (
            (self.known_eavesdroppers, "known"),
            (self.unknown_eavesdroppers, "unknown"),
        ):
            if eaves.size and (np.any(eaves[:, 2] != 0) or not np.all(np.isfinite(eaves))):
                raise ScenarioInvariantError(f"{label} eavesdroppers must sit on the ground")
        if self.known_eavesdroppers.size and self.unknown_eavesdroppers.size:
            d = self.known_eavesdroppers[:, None, :2] - self.unknown_eavesdroppers[None, :, :2]
            if np.min(np.linalg.norm(d, axis=-1)) == 0.0:
                raise ScenarioInvariantError("known and unknown eavesdropper lists intersect")
        if self.d_min <= 0:
            raise ScenarioInvariantError("d_min must be positive")

    @property
    def n_uav(self) -> int:
        return self.swarm_initial_positions[0].shape[0]

    @property
    def n_eaves_known(self) -> int:
        return self.known_eavesdroppers.shape[0]

    @property
    def condition_dim(self) -> int:
        return 6 * self.n_uav + 2 * self.n_eaves_known


def _min_pairwise_distance(points: np.ndarray) -> float:
    diff = points[:, None, :] - points[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    n = len(points)
    return float(np.min(dist[~np.eye(n, dtype=bool)]))


def _place_swarm(rng: np.random.Generator, box: Box, n: int, d_min: float) -> np.ndarray:
    """Rejection-sample ``n`` points in ``box`` at mutual distance >= d_min."""
    budget = 500 * n
    accepted: list[np.ndarray] = []
    attempts = 0
    while len(accepted) < n:
        if attempts >= budget:
            raise PlacementBudgetError(
                f"could not place {n} aircraft at spacing {d_min} m in {box} "
                f"within {budget} samples"
            )
        candidate = box.sample(rng, 1)[0]
        attempts += 1
        if all(np.linalg.norm(candidate - p) >= d_min for p in accepted):
            accepted.append(candidate)
    return np.array(accepted)


def generate_scenario(seed: int, spec: ScenarioSpec) -> Scenario:
    """Build the deterministic scenario identified by ``(seed, spec)``.

    The two reachable boxes sit ``spec.swarm_separation`` apart along x.
    Eavesdroppers are drawn on the ground, uniformly from a three-way
    mixture: under either area footprint or inside a disc centred between
    the areas (radius ``spec.eaves_radius``).
    """
    rng = stream(seed, SCENARIO_STREAM)
    side = spec.area_side
    box1 = Box(0.0, side, 0.0, side, spec.altitude_lo, spec.altitude_hi)
    box2 = Box(
        spec.swarm_separation, spec.swarm_separation + side,
        0.0, side, spec.altitude_lo, spec.altitude_hi,
    )
    positions = (
        _place_swarm(rng, box1, spec.n_uav, spec.d_min),
        _place_swarm(rng, box2, spec.n_uav, spec.d_min),
    )

    radius = spec.eaves_radius if spec.eaves_radius is not None else spec.swarm_separation / 2 + side
    centre = np.array([(box1.x_lo + box2.x_hi) / 2.0, side / 2.0])
    eaves = _place_eavesdroppers(
        rng, spec.n_eaves_known + spec.n_eaves_unknown, box1, box2, centre, radius
    )
    known = eaves[: spec.n_eaves_known]
    unknown = eaves[spec.n_eaves_known:]

    extent = (
        min(box1.x_lo, centre[0] - radius),
        max(box2.x_hi, centre[0] + radius),
        min(0.0, centre[1] - radius),
        max(side, centre[1] + radius),
    )
    return Scenario(
        swarm_initial_positions=positions,
        area_bounds=(box1, box2),
        known_eavesdroppers=known,
        unknown_eavesdroppers=unknown,
        channel=spec.channel,
        energy=spec.energy,
        d_min=spec.d_min,
        rng_seed=int(seed),
        eaves_extent=extent,
    )


def _place_eavesdroppers(
    rng: np.random.Generator,
    n: int,
    box1: Box,
    box2: Box,
    centre: np.ndarray,
    radius: float,
) -> np.ndarray:
    points = np.zeros((n, 3))
    for i in range(n):
        region = int(rng.integers(0, 3))
        if region < 2:
            box = (box1, box2)[region]
            xy = np.array([box.x_lo, box.y_lo]) + rng.random(2) * (
                np.array([box.x_hi - box.x_lo, box.y_hi - box.y_lo])
            )
        else:
            # uniform over the disc between the areas
            r = radius * math.sqrt(rng.random())
            ang = 2.0 * math.pi * rng.random()
            xy = centre + r * np.array([math.cos(ang), math.sin(ang)])
        points[i, :2] = xy
    return points


# --- condition encoding -----------------------------------------------------

def condition_vector(s: Scenario) -> np.ndarray:
    """Flatten the environment factors into a fixed-layout vector in [0, 1].

    Layout: swarm-1 initial positions (x, y, z each affinely normalized to
    that swarm's box), then swarm-2 positions, then known eavesdropper
    (x, y) pairs normalized to ``eaves_extent``. Length is
    ``6 * n_uav + 2 * n_eaves_known``.
    """
    parts = []
    for i in (0, 1):
        box = s.area_bounds[i]
        span = box.hi - box.lo
        parts.append(((s.swarm_initial_positions[i] - box.lo) / span).ravel())
    x_lo, x_hi, y_lo, y_hi = s.eaves_extent
    if s.n_eaves_known:
        xy = s.known_eavesdroppers[:, :2]
        lo = np.array([x_lo, y_lo])
        span = np.array([x_hi - x_lo, y_hi - y_lo])
        parts.append(((xy - lo) / span).ravel())
    vec = np.concatenate(parts) if parts else np.zeros(0)
    return np.clip(vec, 0.0, 1.0)


def condition_vector_inverse(s: Scenario, vec: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Recover (swarm-1 positions, swarm-2 positions, known eavesdropper xy)."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (s.condition_dim,):
        raise ScenarioInvariantError(
            f"condition vector has length {vec.size}, scenario needs {s.condition_dim}"
        )
    n = s.n_uav
    out = []
    offset = 0
    for i in (0, 1):
        box = s.area_bounds[i]
        block = vec[offset: offset + 3 * n].reshape(n, 3)
        out.append(box.lo + block * (box.hi - box.lo))
        offset += 3 * n
    x_lo, x_hi, y_lo, y_hi = s.eaves_extent
    block = vec[offset:].reshape(-1, 2)
    xy = np.array([x_lo, y_lo]) + block * np.array([x_hi - x_lo, y_hi - y_lo])
    return out[0], out[1], xy


# --- persistence ------------------------------------------------------------

def _channel_to_dict(c: ChannelParams) -> dict:
    return {
        "wavelength_m": c.wavelength,
        "bandwidth_hz": c.bandwidth,
        "tx_power_w": list(c.tx_power),
        "k0": c.k0,
        "alpha": c.alpha,
        "noise_power_w": c.noise_power,
        "b1": c.b1,
        "b2": c.b2,
        "mu_los": c.mu_los,
        "mu_nlos": c.mu_nlos,
        "efficiency": c.efficiency,
    }


def _channel_from_dict(d: dict) -> ChannelParams:
    return ChannelParams(
        wavelength=d["wavelength_m"],
        bandwidth=d["bandwidth_hz"],
        tx_power=tuple(d["tx_power_w"]),
        k0=d["k0"],
        alpha=d["alpha"],
        noise_power=d["noise_power_w"],
        b1=d["b1"],
        b2=d["b2"],
        mu_los=d["mu_los"],
        mu_nlos=d["mu_nlos"],
        efficiency=d["efficiency"],
    )


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "scenario",
        "units": {"length": "m", "power": "W", "bandwidth": "Hz", "mass": "kg"},
        "rng_seed": s.rng_seed,
        "d_min": s.d_min,
        "area_bounds": [
            [b.x_lo, b.x_hi, b.y_lo, b.y_hi, b.z_lo, b.z_hi] for b in s.area_bounds
        ],
        "eaves_extent": list(s.eaves_extent),
        "swarm_initial_positions": [p.tolist() for p in s.swarm_initial_positions],
        "known_eavesdroppers": s.known_eavesdroppers.tolist(),
        "unknown_eavesdroppers": s.unknown_eavesdroppers.tolist(),
        "channel": _channel_to_dict(s.channel),
        "energy": {k: v for k, v in s.energy.__dict__.items()},
    }


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict) or data.get("kind") != "scenario":
        raise ScenarioError("not a scenario document")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"scenario schema {data.get('schema_version')!r} unsupported "
            f"(this build reads version {SCHEMA_VERSION})"
        )
    boxes = tuple(Box(*vals) for vals in data["area_bounds"])
    return Scenario(
        swarm_initial_positions=tuple(np.array(p) for p in data["swarm_initial_positions"]),
        area_bounds=boxes,
        known_eavesdroppers=np.array(data["known_eavesdroppers"], dtype=float).reshape(-1, 3),
        unknown_eavesdroppers=np.array(data["unknown_eavesdroppers"], dtype=float).reshape(-1, 3),
        channel=_channel_from_dict(data["channel"]),
        energy=EnergyParams(**data["energy"]),
        d_min=data["d_min"],
        rng_seed=data["rng_seed"],
        eaves_extent=tuple(data["eaves_extent"]),
    )


def save_scenario(s: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(s), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"malformed scenario file {path}: {exc}") from exc
    return scenario_from_dict(data)


def scenarios_equal(a: Scenario, b: Scenario) -> bool:
    """Field-for-field equality, seed included."""
    return scenario_to_dict(a) == scenario_to_dict(b)

"""Air-to-air rates, eavesdropper SNRs under probabilistic LoS, collusion.

The legitimate link between the two swarms is line of sight:

    R = B log2(1 + P_t K0 G d^(-alpha) / sigma^2).

Ground eavesdroppers see a mixture channel: with elevation-dependent
probability the link is LoS (excess attenuation ``mu_los``), otherwise NLoS
(``mu_nlos``), and their SNR divides by the expected attenuation. Colluding
eavesdroppers combine receptions with maximum ratio combining, so their
effective SNR is the plain sum of the individual SNRs.

Secrecy is reported two ways: against the known eavesdropper list (what an
optimizer can see) and against the full list including the unknown ones
(what an assessment can measure). Both are minima over the two
transmission directions and may be negative; nothing is clamped here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .beamforming import (
    AngularGrid,
    ArrayState,
    PatternEvaluation,
    antenna_gain,
    direction_and_distance,
    evaluate_pattern,
)
from .scenario import ChannelParams, Scenario


@dataclass(frozen=True)
class LinkBudget:
    """One evaluated link: geometry in, SNR and rate out."""

    distance: float
    gain: float
    snr: float
    rate: float

    def __post_init__(self):
        if self.distance <= 0 or self.gain < 0 or self.snr < 0 or self.rate < 0:
            raise ValueError(f"inconsistent link budget {self}")


@dataclass(frozen=True)
class SecrecyReport:
    """Two-way rates and the two secrecy capacities, in bps."""

    r_a2a: tuple[float, float]
    r_eaves_known: tuple[float, float]
    r_eaves_all: tuple[float, float]
    c_known: float
    c_achievable: float

    def __post_init__(self):
        if self.c_achievable > self.c_known + 1e-6:
            raise ValueError("achievable secrecy cannot exceed known secrecy")


def a2a_rate(tx_power: float, gain: float, distance: float, p: ChannelParams) -> float:
    """Shannon rate of the legitimate LoS link, bps."""
    if distance <= 0:
        raise ValueError("distance must be positive")
    snr = tx_power * p.k0 * gain * distance ** (-p.alpha) / p.noise_power
    return p.bandwidth * math.log2(1.0 + snr)


def los_probability(elevation_deg: float, b1: float, b2: float) -> float:
    """Logistic LoS probability; elevation in degrees (matches b1/b2 calibration)."""
    return 1.0 / (1.0 + b1 * math.exp(-b2 * (elevation_deg - b1)))


def eavesdropper_snr(
    tx_power: float,
    gain: float,
    distance: float,
    elevation_deg: float,
    p: ChannelParams,
) -> float:
    """Linear SNR observed by one ground eavesdropper."""
    if distance <= 0:
        raise ValueError("distance must be positive")
    p_los = los_probability(elevation_deg, p.b1, p.b2)
    attenuation = p_los * p.mu_los + (1.0 - p_los) * p.mu_nlos
    return tx_power * p.k0 * gain * distance ** (-p.alpha) / attenuation / p.noise_power


def colluded_rate(snrs, bandwidth: float) -> float:
    """Rate available to MRC-colluding eavesdroppers: B log2(1 + sum SNR)."""
    total = 0.0
    for snr in snrs:
        if snr < 0:
            raise ValueError("SNRs must be non-negative")
        total += snr
    return bandwidth * math.log2(1.0 + total)


def array_eavesdropper_snrs(
    state: ArrayState,
    eaves: np.ndarray,
    tx_power: float,
    p: ChannelParams,
    grid: AngularGrid,
    pattern: PatternEvaluation,
) -> list[float]:
    snrs = []
    for point in eaves:
        direction, dist = direction_and_distance(state.center, point)
        gain = antenna_gain(
            state, direction, p.wavelength, p.efficiency, grid,
            element_pattern=p.element_pattern, pattern=pattern,
        )
        horizontal = math.hypot(point[0] - state.center[0], point[1] - state.center[1])
        elevation = math.degrees(math.atan2(state.center[2] - point[2], horizontal))
        snrs.append(eavesdropper_snr(tx_power, gain, dist, elevation, p))
    return snrs


def directional_secrecy(
    state: ArrayState,
    receiver: np.ndarray,
    scenario: Scenario,
    swarm_index: int,
    grid: AngularGrid,
    pattern: PatternEvaluation | None = None,
) -> tuple[float, float, float]:
    """(legitimate rate, known-collusion rate, all-collusion rate) for one direction."""
    p = scenario.channel
    if pattern is None:
        pattern = evaluate_pattern(state, p.wavelength, grid, p.element_pattern)
    direction, dist = direction_and_distance(state.center, receiver)
    gain = antenna_gain(
        state, direction, p.wavelength, p.efficiency, grid,
        element_pattern=p.element_pattern, pattern=pattern,
    )
    tx = p.tx_power[swarm_index]
    r_link = a2a_rate(tx, gain, dist, p)
    known = array_eavesdropper_snrs(state, scenario.known_eavesdroppers, tx, p, grid, pattern)
    unknown = array_eavesdropper_snrs(state, scenario.unknown_eavesdroppers, tx, p, grid, pattern)
    r_known = colluded_rate(known, p.bandwidth)
    r_all = colluded_rate(known + unknown, p.bandwidth)
    return r_link, r_known, r_all


def secrecy_report(solution, scenario: Scenario, grid: AngularGrid, phases=None) -> SecrecyReport:
    """Evaluate both transmission directions of a solution.

    ``solution`` provides ``positions`` (2, n, 3), ``weights`` (2, n) and
    ``receivers`` (2,), where ``receivers[i]`` indexes the receiving
    aircraft inside the opposite swarm. Optional ``phases`` (two arrays)
    inject per-element phase offsets, e.g. for robustness studies.
    """
    r_a2a, r_known, r_all = [], [], []
    for i in (0, 1):
        state = ArrayState(
            positions=solution.positions[i],
            weights=solution.weights[i],
            phases=None if phases is None else phases[i],
        )
        receiver = solution.positions[1 - i][solution.receivers[i]]
        link, known, everyone = directional_secrecy(state, receiver, scenario, i, grid)
        r_a2a.append(link)
        r_known.append(known)
        r_all.append(everyone)
    c_known = min(r_a2a[i] - r_known[i] for i in (0, 1))
    c_achievable = min(r_a2a[i] - r_all[i] for i in (0, 1))
    return SecrecyReport(
        r_a2a=tuple(r_a2a),
        r_eaves_known=tuple(r_known),
        r_eaves_all=tuple(r_all),
        c_known=c_known,
        c_achievable=c_achievable,
    )

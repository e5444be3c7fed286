"""Multi-objective search: Pareto archive, ant-lion walks, archive filtering.

The search keeps a bounded archive of mutually non-dominated solutions.
Each iteration evaluates the population, merges it into the archive
(dominance pruning, an objective-threshold filter that prunes excessively
biased trade-offs, crowding-based eviction at capacity), then rebuilds each
candidate from a roulette-selected elite: continuous variables take the
midpoint of the elite and a bounded random walk around it whose interval
shrinks over the run, and the receiver indices follow an
elite / inertia / random three-way rule.

Two reference strategies ship alongside: the same loop without the
threshold filter, and a fixed half-wavelength linear-array layout with a
random receiver pick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .beamforming import AngularGrid
from .objectives import ObjectiveEvaluator, ObjectiveVector, Solution, repair
from .rng import BASELINE_STREAM, EVOLVE_STREAM, INIT_STREAM, stream
from .scenario import Scenario

# Dominance-comparison counter; lets tests confirm the per-iteration
# archive work stays quadratic in the population size.
COUNTERS = {"dominance_comparisons": 0}


def reset_counters() -> None:
    COUNTERS["dominance_comparisons"] = 0


class EmptyArchiveError(ValueError):
    """Selection from an empty archive."""


@dataclass(eq=False)
class ArchiveEntry:
    solution: Solution
    objectives: ObjectiveVector

    @property
    def values(self) -> np.ndarray:
        return self.objectives.as_array()


@dataclass
class ParetoArchive:
    """Bounded set of mutually non-dominated entries."""

    capacity: int
    entries: list[ArchiveEntry] = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("archive capacity must be >= 1")

    def __len__(self) -> int:
        return len(self.entries)

    def objective_matrix(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, 3))
        return np.array([e.values for e in self.entries])

    def best(self, objective_index: int) -> float:
        if not self.entries:
            raise EmptyArchiveError("archive is empty")
        return float(min(e.values[objective_index] for e in self.entries))


def dominates(a, b) -> bool:
    """Pareto dominance in minimization form: never worse, somewhere better."""
    av = np.fromiter(iter(a), dtype=float, count=3)
    bv = np.fromiter(iter(b), dtype=float, count=3)
    COUNTERS["dominance_comparisons"] += 1
    return bool(np.all(av <= bv) and np.any(av < bv))


def _non_dominated(entries: list[ArchiveEntry]) -> list[ArchiveEntry]:
    """Brute-force dominance pruning; duplicates collapse to one survivor."""
    if not entries:
        return []
    values = np.array([e.values for e in entries])
    n = len(entries)
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        if not keep[i]:
            continue
        for j in range(n):
            if i == j or not keep[j]:
                continue
            COUNTERS["dominance_comparisons"] += 1
            if np.all(values[j] <= values[i]) and np.any(values[j] < values[i]):
                keep[i] = False
                break
            if i < j and np.array_equal(values[i], values[j]):
                keep[j] = False
    return [e for e, k in zip(entries, keep) if k]


def crowding_distances(values: np.ndarray) -> np.ndarray:
    """Normalized nearest-neighbour gap sums; boundaries are infinite."""
    n = len(values)
    if n == 0:
        return np.zeros(0)
    dist = np.zeros(n)
    for o in range(values.shape[1]):
        order = np.argsort(values[:, o], kind="stable")
        lo, hi = values[order[0], o], values[order[-1], o]
        dist[order[0]] = dist[order[-1]] = math.inf
        span = hi - lo
        if span <= 0:
            continue
        for rank in range(1, n - 1):
            i = order[rank]
            if math.isinf(dist[i]):
                continue
            gap = (values[order[rank + 1], o] - values[order[rank - 1], o]) / span
            dist[i] += gap
    return dist


def _evict_to_capacity(entries: list[ArchiveEntry], capacity: int) -> list[ArchiveEntry]:
    entries = list(entries)
    while len(entries) > capacity:
        dist = crowding_distances(np.array([e.values for e in entries]))
        COUNTERS["dominance_comparisons"] += len(entries)
        entries.pop(int(np.argmin(dist)))  # ties resolve to the lowest index
    return entries


def update_archive(archive: ParetoArchive, population: Sequence[ArchiveEntry]) -> ParetoArchive:
    """Merge, prune dominated entries, evict at capacity by crowding."""
    merged = _non_dominated(list(archive.entries) + list(population))
    return ParetoArchive(archive.capacity, _evict_to_capacity(merged, archive.capacity))


def weighted_choice(weights: np.ndarray, rng: np.random.Generator) -> int:
    """Roulette-wheel index draw proportional to non-negative weights."""
    weights = np.asarray(weights, dtype=float)
    total = float(weights.sum())
    if total <= 0:
        raise ValueError("weights must sum to a positive value")
    threshold = rng.random() * total
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if acc > threshold:
            return i
    return len(weights) - 1


def roulette_select(archive: ParetoArchive, rng: np.random.Generator) -> ArchiveEntry:
    """Draw an elite, favouring the least crowded entries.

    Entries are ranked by crowding distance (most crowded first) and the
    rank is used as the roulette weight, so sparse regions of the front are
    picked more often.
    """
    if not archive.entries:
        raise EmptyArchiveError("cannot select from an empty archive")
    if len(archive.entries) == 1:
        return archive.entries[0]
    dist = crowding_distances(archive.objective_matrix())
    order = np.argsort(dist, kind="stable")  # ascending: most crowded first
    weights = np.empty(len(order))
    weights[order] = np.arange(1, len(order) + 1)
    return archive.entries[weighted_choice(weights, rng)]


# --- threshold filter ---------------------------------------------------------

def filter_thresholds(values: np.ndarray, deltas: tuple[float, float, float]):
    """Per-objective removal thresholds, sign-aware.

    Objectives 1 and 2 are filtered against a fraction of their best
    (minimum) value, objective 2 in dB form; this is only meaningful while
    that best value is negative, otherwise the threshold is None and the
    filter skips. Objective 3 is filtered against a fraction of its worst
    (maximum) value.
    """
    if len(values) == 0:
        return None, None, None
    g1_min = float(values[:, 0].min())
    zeta1 = g1_min * deltas[0] if g1_min < 0 else None
    with np.errstate(divide="ignore"):
        g2_db = 20.0 * np.log10(values[:, 1])
    g2_db_min = float(g2_db.min())
    zeta2 = g2_db_min * deltas[1] if g2_db_min < 0 else None
    zeta3 = float(values[:, 2].max()) * deltas[2]
    return zeta1, zeta2, zeta3


def sorting_filter(
    archive: ParetoArchive,
    population: Sequence[ArchiveEntry],
    t: int,
    deltas: tuple[float, float, float],
) -> ParetoArchive:
    """Merge and prune, then drop overly biased trade-offs for one objective.

    Iteration ``t`` filters objective ``t mod 3`` (0 based): entries whose
    active-objective value exceeds the threshold are removed. The secrecy
    filter iteration culls strictly by threshold, keeping only its own
    incumbent; the sidelobe and energy iterations additionally retain every
    per-objective incumbent as a boundary anchor (the same spirit as
    crowding's boundary preservation). The secrecy incumbent therefore
    survives every iteration, so the best-g1 trace is monotone and the
    archive can never empty. Capacity eviction by crowding runs last.
    """
    merged = _non_dominated(list(archive.entries) + list(population))
    if not merged:
        return ParetoArchive(archive.capacity, [])
    values = np.array([e.values for e in merged])
    zetas = filter_thresholds(values, deltas)
    active = t % 3
    zeta = zetas[active]
    if zeta is not None:
        if active == 1:
            with np.errstate(divide="ignore"):
                active_values = 20.0 * np.log10(values[:, 1])
        else:
            active_values = values[:, active]
        remove = active_values > zeta
        protected = {0, active} if active == 0 else {0, 1, 2}
        for o in protected:
            remove[int(np.argmin(values[:, o]))] = False
        merged = [e for e, r in zip(merged, remove) if not r]
    return ParetoArchive(archive.capacity, _evict_to_capacity(merged, archive.capacity))


# --- candidate updates --------------------------------------------------------

@dataclass(frozen=True)
class EvolutionConfig:
    """Search hyperparameters.

    ``deltas`` weight the per-objective filter thresholds (only used by the
    filtered variant). ``shrink_thresholds`` / ``shrink_exponents`` define
    the stepwise walk-interval shrink ratio: once ``t / t_max`` passes the
    k-th threshold the interval divisor becomes ``10 ** exponent[k]``.
    ``early_stop`` optionally terminates once one archive entry meets all
    three objective thresholds.
    """

    population: int = 50
    t_max: int = 500
    archive_capacity: int | None = None  # default: population size
    deltas: tuple[float, float, float] = (0.8, 0.8, 0.8)
    shrink_thresholds: tuple[float, ...] = (0.1, 0.5, 0.75, 0.9, 0.95)
    shrink_exponents: tuple[int, ...] = (1, 2, 3, 4, 5)
    drift_radius: float = 20.0
    rng_seed: int = 0
    early_stop: tuple[float, float, float] | None = None

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if any(not 0 <= d <= 1 for d in self.deltas):
            raise ValueError("filter weights must lie in [0, 1]")
        if len(self.shrink_thresholds) != len(self.shrink_exponents):
            raise ValueError("shrink schedule lists must have equal length")

    @property
    def capacity(self) -> int:
        return self.archive_capacity if self.archive_capacity is not None else self.population


def shrink_ratio(t: int, t_max: int, cfg: EvolutionConfig) -> float:
    """Walk-interval divisor at iteration ``t``; non-decreasing in ``t``."""
    progress = t / t_max
    ratio = 1.0
    for threshold, exponent in zip(cfg.shrink_thresholds, cfg.shrink_exponents):
        if progress > threshold:
            ratio = 10.0 ** exponent
    return ratio


def _solution_bounds(s: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper bounds of the flattened continuous variables (P then weights)."""
    lo_parts, hi_parts = [], []
    for i in (0, 1):
        box = s.area_bounds[i]
        lo_parts.append(np.tile(box.lo, s.n_uav))
        hi_parts.append(np.tile(box.hi, s.n_uav))
    lo_parts.append(np.zeros(2 * s.n_uav))
    hi_parts.append(np.ones(2 * s.n_uav))
    return np.concatenate(lo_parts), np.concatenate(hi_parts)


def _continuous_vector(x: Solution) -> np.ndarray:
    return np.concatenate([x.positions.ravel(), x.weights.ravel()])


def _solution_from_continuous(vec: np.ndarray, receivers: np.ndarray, n_uav: int) -> Solution:
    split = 6 * n_uav
    return Solution(
        positions=vec[:split].reshape(2, n_uav, 3),
        weights=vec[split:].reshape(2, n_uav),
        receivers=receivers,
    )


def random_walk_guide(
    center: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    t: int,
    t_max: int,
    cfg: EvolutionConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample the walk guide: a +-1 cumulative walk mapped onto the interval
    of width ``(hi - lo) / shrink_ratio`` centred on ``center``."""
    width = (hi - lo) / shrink_ratio(t, t_max, cfg)
    steps = 2.0 * (rng.random((t_max, len(center))) > 0.5) - 1.0
    walk = np.vstack([np.zeros(len(center)), np.cumsum(steps, axis=0)])
    w_min = walk.min(axis=0)
    w_max = walk.max(axis=0)
    span = np.where(w_max > w_min, w_max - w_min, 1.0)
    unit = (walk[min(t, t_max)] - w_min) / span  # in [0, 1]
    return np.clip(center - width / 2.0 + unit * width, lo, hi)


def integer_update(
    u_archive: np.ndarray, u_old: np.ndarray, n_uav: int, rng: np.random.Generator
) -> np.ndarray:
    """Elite / inertia / random receiver pick, independently per direction."""
    out = np.empty(2, dtype=int)
    for i in (0, 1):
        r = rng.random()
        if r < 1.0 / 3.0:
            out[i] = u_archive[i]
        elif r < 2.0 / 3.0:
            out[i] = u_old[i]
        else:
            out[i] = int(rng.integers(0, n_uav))
    return out


def antlion_update(
    x_old: Solution,
    elite: Solution,
    t: int,
    t_max: int,
    scenario: Scenario,
    cfg: EvolutionConfig,
    rng: np.random.Generator,
) -> tuple[Solution, bool]:
    """One candidate rebuild: walk guide averaged with the elite, repaired."""
    lo, hi = _solution_bounds(scenario)
    elite_vec = _continuous_vector(elite)
    guide = random_walk_guide(elite_vec, lo, hi, t, t_max, cfg, rng)
    new_vec = (guide + elite_vec) / 2.0
    receivers = integer_update(elite.receivers, x_old.receivers, scenario.n_uav, rng)
    candidate = _solution_from_continuous(new_vec, receivers, scenario.n_uav)
    return repair(candidate, scenario)


def walk_offsets(
    n: int, shape: tuple[int, ...], drift_radius: float, rng: np.random.Generator
) -> np.ndarray:
    """Per-candidate coordinate offsets from a +-1 cumulative walk.

    Candidate 0 gets a zero offset; candidate k gets the k-step partial sum,
    scaled so every offset magnitude stays within ``drift_radius``.
    """
    steps = 2.0 * (rng.random((n,) + shape) > 0.5) - 1.0
    offsets = np.concatenate([np.zeros((1,) + shape), np.cumsum(steps, axis=0)[:-1]], axis=0)
    return offsets * (drift_radius / n)


def random_walk_init(
    scenario: Scenario,
    n: int,
    rng: np.random.Generator,
    drift_radius: float = 20.0,
) -> list[Solution]:
    """Cold-start population drifted from the initial swarm positions.

    Position coordinates follow :func:`walk_offsets`; weights are uniform
    in [0, 1] and receivers uniform random. All candidates are repaired.
    """
    if n < 1:
        raise ValueError("population size must be >= 1")
    shape = scenario.swarm_initial_positions[0].shape
    base = np.stack(scenario.swarm_initial_positions)  # (2, n_uav, 3)
    offsets = walk_offsets(n, (2,) + shape, drift_radius, rng)
    population = []
    for k in range(n):
        positions = base + offsets[k]
        weights = rng.random((2, shape[0]))
        receivers = np.minimum(
            np.round(rng.random(2) * scenario.n_uav).astype(int), scenario.n_uav - 1
        )
        candidate = Solution(positions, weights, receivers)
        repaired, _ = repair(candidate, scenario)
        population.append(repaired)
    return population


# --- main loops ---------------------------------------------------------------

@dataclass
class TracePoint:
    t: int
    best_g1: float
    best_g2: float
    best_g3: float
    archive_size: int


@dataclass
class RunResult:
    archive: ParetoArchive
    trace: list[TracePoint]
    evaluations: int


def _evaluate_population(
    population: list[tuple[Solution, bool]], evaluator: ObjectiveEvaluator
) -> list[ArchiveEntry]:
    entries = []
    for solution, feasible in population:
        if not feasible:
            continue  # death penalty: never reaches the archive
        entries.append(ArchiveEntry(solution, evaluator.evaluate(solution)))
    return entries


def _trace_point(t: int, archive: ParetoArchive) -> TracePoint:
    values = archive.objective_matrix()
    return TracePoint(
        t=t,
        best_g1=float(values[:, 0].min()) if len(values) else math.nan,
        best_g2=float(values[:, 1].min()) if len(values) else math.nan,
        best_g3=float(values[:, 2].min()) if len(values) else math.nan,
        archive_size=len(archive),
    )


def _meets_early_stop(archive: ParetoArchive, thresholds) -> bool:
    if thresholds is None or not archive.entries:
        return False
    target = np.asarray(thresholds, dtype=float)
    return bool(np.any(np.all(archive.objective_matrix() <= target, axis=1)))


def _evolve(
    scenario: Scenario,
    cfg: EvolutionConfig,
    init: Sequence[Solution],
    evaluator: ObjectiveEvaluator,
    use_filter: bool,
) -> RunResult:
    if not init:
        raise ValueError("initial population must be non-empty")
    population: list[tuple[Solution, bool]] = [repair(x, scenario) for x in init]
    streams = [stream(cfg.rng_seed, EVOLVE_STREAM, n) for n in range(len(population))]
    archive = ParetoArchive(cfg.capacity)
    trace: list[TracePoint] = []
    for t in range(1, cfg.t_max + 1):
        entries = _evaluate_population(population, evaluator)
        if use_filter:
            archive = sorting_filter(archive, entries, t, cfg.deltas)
        else:
            archive = update_archive(archive, entries)
        trace.append(_trace_point(t, archive))
        if _meets_early_stop(archive, cfg.early_stop):
            break
        if t == cfg.t_max:
            break
        for n in range(len(population)):
            rng_n = streams[n]
            elite = roulette_select(archive, rng_n)
            population[n] = antlion_update(
                population[n][0], elite.solution, t, cfg.t_max, scenario, cfg, rng_n
            )
    return RunResult(archive=archive, trace=trace, evaluations=evaluator.evaluations)


def run(
    scenario: Scenario,
    cfg: EvolutionConfig,
    init: Sequence[Solution],
    grid: AngularGrid,
    evaluator: ObjectiveEvaluator | None = None,
) -> RunResult:
    """Full evolution with the threshold filter enabled."""
    evaluator = evaluator or ObjectiveEvaluator(scenario, grid)
    return _evolve(scenario, cfg, init, evaluator, use_filter=True)


def vanilla_moalo_run(
    scenario: Scenario,
    cfg: EvolutionConfig,
    init: Sequence[Solution],
    grid: AngularGrid,
    evaluator: ObjectiveEvaluator | None = None,
) -> RunResult:
    """Reference loop: dominance plus crowding only, no threshold filter."""
    evaluator = evaluator or ObjectiveEvaluator(scenario, grid)
    return _evolve(scenario, cfg, init, evaluator, use_filter=False)


def linear_array_positions(scenario: Scenario, swarm_index: int) -> np.ndarray:
    """Half-wavelength line through the swarm centroid at mean altitude.

    The line runs horizontally, broadside to the other swarm, and is
    clamped to the reachable box afterwards by the caller's repair.
    """
    initial = scenario.swarm_initial_positions[swarm_index]
    other = scenario.swarm_initial_positions[1 - swarm_index]
    centroid = initial.mean(axis=0)
    toward = other.mean(axis=0) - centroid
    toward[2] = 0.0
    norm = np.linalg.norm(toward)
    axis = np.array([0.0, 1.0, 0.0]) if norm == 0 else (
        np.array([-toward[1], toward[0], 0.0]) / norm
    )
    spacing = scenario.channel.wavelength / 2.0
    n = scenario.n_uav
    offsets = (np.arange(n) - (n - 1) / 2.0) * spacing
    return centroid[None, :] + offsets[:, None] * axis[None, :]


def laa_swarm_baseline(scenario: Scenario, rng: np.random.Generator | None = None) -> Solution:
    """Linear-array strategy: both swarms form lines, receivers are random."""
    rng = rng if rng is not None else stream(scenario.rng_seed, BASELINE_STREAM)
    positions = np.stack(
        [linear_array_positions(scenario, i) for i in (0, 1)]
    )
    weights = np.ones((2, scenario.n_uav))
    receivers = rng.integers(0, scenario.n_uav, size=2)
    solution = Solution(positions, weights, receivers)
    repaired, feasible = repair(solution, scenario)
    if not feasible:
        raise ValueError("linear-array layout could not be repaired into the box")
    return repaired


def cold_start_population(scenario: Scenario, cfg: EvolutionConfig) -> list[Solution]:
    rng = stream(cfg.rng_seed, INIT_STREAM)
    return random_walk_init(scenario, cfg.population, rng, cfg.drift_radius)

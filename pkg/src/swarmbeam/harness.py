"""Experiment runner: campaigns, final-solution pick, robustness, metrics.

A campaign runs (scenario seed x algorithm) cells, each fully determined by
its seeds, and serializes one record per cell. Reporting units are fixed
transforms of the minimization-form objectives: f1 = -g1 in bps, f2 in dB
as 20 log10(g2), f3 = g3 in joules. Wall-clock numbers live in a metadata
block separate from the deterministic payload, so rerunning a campaign
reproduces the payload byte for byte.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cvae as cvae_mod
from .beamforming import AngularGrid, ArrayState, direction_and_distance
from .channel import SecrecyReport
from .objectives import (
    ObjectiveEvaluator,
    ObjectiveVector,
    Solution,
    repair,
    solution_from_dict,
    solution_to_dict,
)
from .optimizer import (
    ArchiveEntry,
    EmptyArchiveError,
    EvolutionConfig,
    ParetoArchive,
    RunResult,
    TracePoint,
    cold_start_population,
    laa_swarm_baseline,
    run,
    vanilla_moalo_run,
)
from .rng import INIT_STREAM, PERTURB_STREAM, stream
from .scenario import (
    Scenario,
    ScenarioSpec,
    generate_scenario,
    scenario_from_dict,
    scenario_to_dict,
)

RESULTS_SCHEMA_VERSION = 1
KNOWN_ALGORITHMS = ("gensi", "moalo", "laa")


class ReferenceDominatedError(ValueError):
    """A hypervolume reference point fails to be dominated by the archive."""


# --- final-solution selection ---------------------------------------------------

def select_final_index(archive: ParetoArchive) -> int:
    """Index of the entry with the best secrecy objective (g3, g2 tie-break)."""
    if not archive.entries:
        raise EmptyArchiveError("cannot select from an empty archive")
    objs = [e.objectives for e in archive.entries]
    return min(range(len(objs)), key=lambda i: (objs[i].g1, objs[i].g3, objs[i].g2))


def select_final(archive: ParetoArchive) -> ArchiveEntry:
    """Entry with the best secrecy objective; ties break on g3 then g2."""
    return archive.entries[select_final_index(archive)]


# --- hypervolume ------------------------------------------------------------------

def _staircase_area(points: np.ndarray, ref: np.ndarray) -> float:
    """2D hypervolume (minimization) of points against ref.

    Keep the 2D non-dominated staircase (x ascending, y strictly
    descending); each step then owns the strip from its x to the next
    step's x.
    """
    if len(points) == 0:
        return 0.0
    pts = sorted(set(map(tuple, points)))
    stairs = []
    best_y = math.inf
    for x, y in pts:
        if y < best_y:
            stairs.append((x, y))
            best_y = y
    area = 0.0
    for i, (x, y) in enumerate(stairs):
        next_x = stairs[i + 1][0] if i + 1 < len(stairs) else ref[0]
        area += (next_x - x) * (ref[1] - y)
    return area


def hypervolume(values, ref) -> float:
    """Exact 3-objective hypervolume of ``values`` against ``ref``.

    All rows must weakly dominate the reference point. Sweep over the third
    objective, accumulating the 2D staircase area of every slab.
    """
    pts = np.atleast_2d(np.asarray(values, dtype=float))
    ref = np.asarray(ref, dtype=float).ravel()
    if pts.shape[1] != 3 or ref.shape != (3,):
        raise ValueError("hypervolume expects 3-objective rows")
    if np.any(pts > ref[None, :]):
        raise ReferenceDominatedError("some entries do not dominate the reference point")
    order = np.argsort(pts[:, 2], kind="stable")
    pts = pts[order]
    levels = np.unique(pts[:, 2])
    total = 0.0
    for i, z in enumerate(levels):
        z_next = levels[i + 1] if i + 1 < len(levels) else ref[2]
        active = pts[pts[:, 2] <= z][:, :2]
        total += _staircase_area(active, ref[:2]) * (z_next - z)
    return float(total)


def reference_point(values) -> np.ndarray:
    """Sign-safe nadir margin: nadir plus 10 percent of its magnitude."""
    pts = np.atleast_2d(np.asarray(values, dtype=float))
    nadir = pts.max(axis=0)
    return nadir + np.maximum(0.1 * np.abs(nadir), 1e-9)


# --- perturbations ----------------------------------------------------------------

@dataclass(frozen=True)
class Perturbation:
    """One robustness setting.

    kinds: ``phase_sync`` (params: omega_c rad/s, q1, q2, delta_t s),
    ``csi_psk`` (params: order, a power of two), ``jitter`` (params:
    max_drift_m).
    """

    kind: str
    params: dict
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("phase_sync", "csi_psk", "jitter"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "csi_psk":
            order = int(self.params["order"])
            if order < 2 or order & (order - 1):
                raise ValueError("PSK order must be a power of two")
        if self.kind == "jitter" and self.params["max_drift_m"] < 0:
            raise ValueError("max drift must be non-negative")
        for key, value in self.params.items():
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"perturbation parameter {key} must be finite and >= 0")


def phase_sync_variance(omega_c: float, q1: float, q2: float, delta_t: float) -> float:
    """Oscillator phase-error variance accumulated over delta_t seconds."""
    return omega_c ** 2 * q1 ** 2 * delta_t + omega_c ** 2 * q2 ** 2 * delta_t ** 3 / 3.0


def _steering_phases(x: Solution, wavelength: float) -> list[np.ndarray]:
    """Per-element carrier phase toward each direction's receiver."""
    out = []
    for i in (0, 1):
        state = ArrayState(positions=x.positions[i], weights=x.weights[i])
        receiver = x.positions[1 - i][x.receivers[i]]
        direction, _ = direction_and_distance(state.center, receiver)
        k = 2.0 * math.pi / wavelength
        out.append(k * (state.relative_positions @ direction.unit_vector()))
    return out


def psk_quantization_residuals(
    phases: np.ndarray, order: int, reference_offset: float = 0.0
) -> np.ndarray:
    """Nearest-codeword phase error for each element; bounded by pi/order."""
    step = 2.0 * math.pi / order
    shifted = phases + reference_offset
    return np.round(shifted / step) * step - shifted


@dataclass
class PerturbationReport:
    nominal: SecrecyReport
    perturbed: SecrecyReport
    nominal_f2_db: float
    perturbed_f2_db: float

    @property
    def delta_f1_bps(self) -> float:
        return self.perturbed.c_known - self.nominal.c_known

    @property
    def delta_f2_db(self) -> float:
        return self.perturbed_f2_db - self.nominal_f2_db


def perturb_and_reevaluate(
    x: Solution,
    s: Scenario,
    p: Perturbation,
    grid: AngularGrid,
    trial: int = 0,
    evaluator: ObjectiveEvaluator | None = None,
) -> PerturbationReport:
    """Re-evaluate a solution under one perturbation draw.

    The nominal solution is never mutated. ``trial`` selects the Monte
    Carlo draw within the perturbation's seed.
    """
    evaluator = evaluator or ObjectiveEvaluator(s, grid)
    nominal_obj, nominal_report = evaluator.evaluate_full(x)
    rng = stream(p.seed, PERTURB_STREAM, trial)

    if p.kind == "phase_sync":
        variance = phase_sync_variance(
            p.params["omega_c"], p.params["q1"], p.params["q2"], p.params["delta_t"]
        )
        sigma = math.sqrt(variance)
        phases = [rng.normal(0.0, sigma, size=s.n_uav) if sigma > 0 else np.zeros(s.n_uav) for _ in (0, 1)]
        perturbed_obj, perturbed_report = _evaluate_with_phases(evaluator, x, phases)
    elif p.kind == "csi_psk":
        order = int(p.params["order"])
        offset = rng.random() * 2.0 * math.pi  # unknown codebook phase reference
        steering = _steering_phases(x, s.channel.wavelength)
        phases = [psk_quantization_residuals(ph, order, offset) for ph in steering]
        perturbed_obj, perturbed_report = _evaluate_with_phases(evaluator, x, phases)
    else:  # jitter
        drift = p.params["max_drift_m"]
        moved = x.copy()
        moved.positions = moved.positions + rng.uniform(-drift, drift, size=moved.positions.shape)
        repaired, feasible = repair(moved, s)
        if not feasible:
            raise ValueError("jittered solution could not be repaired")
        perturbed_obj, perturbed_report = evaluator.evaluate_full(repaired)

    return PerturbationReport(
        nominal=nominal_report,
        perturbed=perturbed_report,
        nominal_f2_db=nominal_obj.f2_db,
        perturbed_f2_db=perturbed_obj.f2_db,
    )


def _evaluate_with_phases(
    evaluator: ObjectiveEvaluator, x: Solution, phases
) -> tuple[ObjectiveVector, SecrecyReport]:
    """Evaluate with per-element phase offsets, same code path as nominal."""
    return evaluator.evaluate_full(x, phases=phases)


# --- campaign ---------------------------------------------------------------------

@dataclass(frozen=True)
class CampaignConfig:
    seeds: tuple[int, ...]
    algorithms: tuple[str, ...]
    spec: ScenarioSpec = field(default_factory=ScenarioSpec)
    population: int = 50
    t_max: int = 500
    grid_resolution_deg: float = 5.0
    window_half_angle_deg: float = 2.5
    window_fine_deg: float = 0.25
    deltas: tuple[float, float, float] = (0.8, 0.8, 0.8)
    drift_radius: float = 20.0
    shrink_thresholds: tuple[float, ...] = (0.1, 0.5, 0.75, 0.9, 0.95)
    shrink_exponents: tuple[int, ...] = (1, 2, 3, 4, 5)
    warm_model_path: str | None = None
    warm_iter_ratio: float = 0.4
    warm_mix: float = 1.0  # fraction of the warm population drawn from the generator
    jobs: int = 1

    def __post_init__(self):
        for algo in self.algorithms:
            base = algo.replace("-warm", "").replace("-cold", "")
            if base not in KNOWN_ALGORITHMS:
                raise ValueError(f"unknown algorithm {algo!r}")

    def to_dict(self) -> dict:
        d = {
            "seeds": list(self.seeds),
            "algorithms": list(self.algorithms),
            "population": self.population,
            "t_max": self.t_max,
            "grid_resolution_deg": self.grid_resolution_deg,
            "window_half_angle_deg": self.window_half_angle_deg,
            "window_fine_deg": self.window_fine_deg,
            "deltas": list(self.deltas),
            "drift_radius": self.drift_radius,
            "shrink_thresholds": list(self.shrink_thresholds),
            "shrink_exponents": list(self.shrink_exponents),
            "warm_model_path": self.warm_model_path,
            "warm_iter_ratio": self.warm_iter_ratio,
            "warm_mix": self.warm_mix,
            "spec": {
                "n_uav": self.spec.n_uav,
                "n_eaves_known": self.spec.n_eaves_known,
                "n_eaves_unknown": self.spec.n_eaves_unknown,
                "swarm_separation": self.spec.swarm_separation,
                "area_side": self.spec.area_side,
                "altitude_lo": self.spec.altitude_lo,
                "altitude_hi": self.spec.altitude_hi,
                "d_min": self.spec.d_min,
            },
        }
        return d


@dataclass
class RunRecord:
    scenario_seed: int
    algorithm: str
    config: dict
    scenario: Scenario
    trace: list[TracePoint]
    archive_objectives: list[ObjectiveVector]
    archive_solutions: list[Solution]
    selected_index: int
    hypervolume: float
    reference: np.ndarray
    wall_time_s: float

    @property
    def selected_objectives(self) -> ObjectiveVector:
        return self.archive_objectives[self.selected_index]

    @property
    def selected_solution(self) -> Solution:
        return self.archive_solutions[self.selected_index]


def _evaluator_for(scenario: Scenario, cfg: CampaignConfig) -> ObjectiveEvaluator:
    grid = AngularGrid.from_degrees(cfg.grid_resolution_deg)
    return ObjectiveEvaluator(
        scenario,
        grid,
        window_half_angle=math.radians(cfg.window_half_angle_deg),
        window_fine_resolution=math.radians(cfg.window_fine_deg),
    )


def run_cell(
    seed: int,
    algorithm: str,
    cfg: CampaignConfig,
    warm_model=None,
    scenario: Scenario | None = None,
) -> RunRecord:
    """Run one (scenario seed, algorithm) campaign cell.

    ``seed`` drives the evolution streams; the scenario defaults to the one
    generated from the same seed and ``cfg.spec``.
    """
    if scenario is None:
        scenario = generate_scenario(seed, cfg.spec)
    evaluator = _evaluator_for(scenario, cfg)
    warm = algorithm.endswith("-warm")
    base = algorithm.replace("-warm", "").replace("-cold", "")
    t_max = max(1, round(cfg.t_max * cfg.warm_iter_ratio)) if warm else cfg.t_max
    evo = EvolutionConfig(
        population=cfg.population,
        t_max=t_max,
        deltas=cfg.deltas,
        drift_radius=cfg.drift_radius,
        shrink_thresholds=cfg.shrink_thresholds,
        shrink_exponents=cfg.shrink_exponents,
        rng_seed=seed,
    )
    started = time.perf_counter()
    if base == "laa":
        solution = laa_swarm_baseline(scenario)
        entry = ArchiveEntry(solution, evaluator.evaluate(solution))
        archive = ParetoArchive(1, [entry])
        trace = [TracePoint(1, entry.objectives.g1, entry.objectives.g2, entry.objectives.g3, 1)]
        result = RunResult(archive=archive, trace=trace, evaluations=evaluator.evaluations)
    else:
        if warm:
            if warm_model is None:
                if cfg.warm_model_path is None:
                    raise cvae_mod.CheckpointMismatchError("warm start requested without a checkpoint")
                warm_model = cvae_mod.load_model(cfg.warm_model_path)
            n_generated = round(cfg.warm_mix * cfg.population)
            init = cvae_mod.generate_population(
                warm_model, scenario, n_generated, stream(seed, INIT_STREAM, 1)
            )
            if n_generated < cfg.population:
                filler = cold_start_population(scenario, evo)
                init = list(init) + filler[: cfg.population - n_generated]
        else:
            init = cold_start_population(scenario, evo)
        runner = run if base == "gensi" else vanilla_moalo_run
        result = runner(scenario, evo, init, evaluator.base_grid, evaluator=evaluator)
    wall = time.perf_counter() - started

    values = result.archive.objective_matrix()
    ref = reference_point(values)
    selected_index = select_final_index(result.archive)
    return RunRecord(
        scenario_seed=scenario.rng_seed,
        algorithm=algorithm,
        config=cfg.to_dict(),
        scenario=scenario,
        trace=result.trace,
        archive_objectives=[e.objectives for e in result.archive.entries],
        archive_solutions=[e.solution for e in result.archive.entries],
        selected_index=selected_index,
        hypervolume=hypervolume(values, ref),
        reference=ref,
        wall_time_s=wall,
    )


def run_campaign(cfg: CampaignConfig) -> list[RunRecord]:
    """All (seed, algorithm) cells, ordered by declared index.

    Cells are independent and may execute concurrently; records are
    collected by index so the output is identical for any ``jobs``.
    """
    cells = [(seed, algo) for seed in cfg.seeds for algo in cfg.algorithms]
    warm_model = None
    if cfg.warm_model_path is not None:
        warm_model = cvae_mod.load_model(cfg.warm_model_path)
    if not cells:
        return []
    if cfg.jobs <= 1:
        return [run_cell(seed, algo, cfg, warm_model) for seed, algo in cells]
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        futures = [pool.submit(run_cell, seed, algo, cfg, warm_model) for seed, algo in cells]
        return [f.result() for f in futures]


# --- serialization ----------------------------------------------------------------

def trace_to_rows(trace: list[TracePoint]) -> list[dict]:
    return [
        {
            "t": p.t,
            "best_g1": p.best_g1,
            "best_g2": p.best_g2,
            "best_g3": p.best_g3,
            "archive_size": p.archive_size,
        }
        for p in trace
    ]


def record_to_dict(record: RunRecord) -> dict:
    """Deterministic payload; wall time is intentionally excluded."""
    return {
        "scenario_seed": record.scenario_seed,
        "algorithm": record.algorithm,
        "config": record.config,
        "scenario": scenario_to_dict(record.scenario),
        "trace": trace_to_rows(record.trace),
        "archive": [
            {
                "g1": o.g1,
                "g2": o.g2,
                "g3": o.g3,
                "f1_bps": o.f1_bps,
                "f2_db": o.f2_db,
                "f3_joule": o.f3_joule,
                "solution": solution_to_dict(x),
            }
            for o, x in zip(record.archive_objectives, record.archive_solutions)
        ],
        "selected_index": record.selected_index,
        "hypervolume": record.hypervolume,
        "reference_point": record.reference.tolist(),
    }


def record_from_dict(data: dict) -> RunRecord:
    objectives = [
        ObjectiveVector(e["g1"], e["g2"], e["g3"]) for e in data["archive"]
    ]
    solutions = [solution_from_dict(e["solution"]) for e in data["archive"]]
    trace = [
        TracePoint(r["t"], r["best_g1"], r["best_g2"], r["best_g3"], r["archive_size"])
        for r in data["trace"]
    ]
    return RunRecord(
        scenario_seed=data["scenario_seed"],
        algorithm=data["algorithm"],
        config=data["config"],
        scenario=scenario_from_dict(data["scenario"]),
        trace=trace,
        archive_objectives=objectives,
        archive_solutions=solutions,
        selected_index=data["selected_index"],
        hypervolume=data["hypervolume"],
        reference=np.array(data["reference_point"], dtype=float),
        wall_time_s=float(data.get("wall_time_s", 0.0)),
    )


CSV_HEADER = "record,scenario_seed,algorithm,entry,f1 [bps],f2 [dB],f3 [J],g1 [-bps],g2 [ratio],g3 [J]"


def emit_results(records: list[RunRecord], out_dir, formats=("json", "csv")) -> list[Path]:
    """Write result files; returns the created paths.

    ``results.json`` holds a metadata block (timestamps, wall times) next
    to the deterministic payload. ``results.csv`` has one row per archive
    entry with reporting units in the header. One trace CSV per record.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if "json" in formats:
        doc = {
            "schema_version": RESULTS_SCHEMA_VERSION,
            "meta": {
                "created_unix": time.time(),
                "wall_times_s": [r.wall_time_s for r in records],
            },
            "results": [record_to_dict(r) for r in records],
        }
        path = out_dir / "results.json"
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True)
            fh.write("\n")
        written.append(path)
    if "csv" in formats:
        lines = [CSV_HEADER]
        for idx, record in enumerate(records):
            for entry, obj in enumerate(record.archive_objectives):
                lines.append(
                    f"{idx},{record.scenario_seed},{record.algorithm},{entry},"
                    f"{obj.f1_bps!r},{obj.f2_db!r},{obj.f3_joule!r},"
                    f"{obj.g1!r},{obj.g2!r},{obj.g3!r}"
                )
        path = out_dir / "results.csv"
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
        for idx, record in enumerate(records):
            rows = ["t,best_g1,best_g2,best_g3,archive_size"]
            rows += [
                f"{p.t},{p.best_g1!r},{p.best_g2!r},{p.best_g3!r},{p.archive_size}"
                for p in record.trace
            ]
            path = out_dir / f"trace_{idx:03d}_{record.algorithm}_{record.scenario_seed}.csv"
            path.write_text("\n".join(rows) + "\n")
            written.append(path)
    return written


def results_payload_bytes(path) -> bytes:
    """The deterministic part of a results.json file, canonically encoded."""
    with open(path) as fh:
        doc = json.load(fh)
    return json.dumps(doc["results"], sort_keys=True).encode()

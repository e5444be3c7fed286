"""Command-line front end.

Verbs: ``scenario gen``, ``optimize``, ``train-cvae``, ``campaign``,
``robustness``, ``beam pattern``, ``report``. Exit codes: 0 success,
2 invalid configuration, 3 infeasible scenario, 4 checkpoint mismatch.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import cvae as cvae_mod
from . import harness
from .beamforming import AngularGrid, ArrayState, evaluate_pattern
from .objectives import ObjectiveEvaluator, load_solution
from .scenario import (
    CHANNEL_PRESETS,
    PlacementBudgetError,
    ScenarioError,
    ScenarioSpec,
    generate_scenario,
    load_scenario,
    save_scenario,
)

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_CHECKPOINT = 4


def _scenario_gen(args) -> int:
    preset = CHANNEL_PRESETS.get(args.preset)
    if preset is None:
        print(f"unknown channel preset {args.preset!r}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    spec = ScenarioSpec(
        n_uav=args.n_uav,
        n_eaves_known=args.n_eaves_known,
        n_eaves_unknown=args.n_eaves_unknown,
        swarm_separation=args.separation,
        area_side=args.side,
        altitude_lo=args.alt_min,
        altitude_hi=args.alt_max,
        d_min=args.d_min,
        channel=preset(),
    )
    scenario = generate_scenario(args.seed, spec)
    save_scenario(scenario, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _optimize(args) -> int:
    scenario = load_scenario(args.scenario)
    cfg = harness.CampaignConfig(
        seeds=(scenario.rng_seed,),
        algorithms=(args.algo + ("-warm" if args.init == "warm" else ""),),
        population=args.pop,
        t_max=args.iters,
        grid_resolution_deg=args.grid_deg,
        warm_model_path=args.model,
        warm_iter_ratio=1.0,  # --iters is taken literally here
        warm_mix=args.warm_mix,
        drift_radius=args.drift_radius,
    )
    record = harness.run_cell(args.seed, cfg.algorithms[0], cfg, scenario=scenario)
    doc = {
        "schema_version": harness.RESULTS_SCHEMA_VERSION,
        "meta": {"wall_times_s": [record.wall_time_s]},
        "results": [harness.record_to_dict(record)],
    }
    with open(args.out, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")
    best = record.selected_objectives
    print(
        f"wrote {args.out}: archive={len(record.archive_objectives)} "
        f"f1={best.f1_bps:.4g} bps f2={best.f2_db:.3f} dB f3={best.f3_joule:.4g} J"
    )
    return EXIT_OK


def _train_cvae(args) -> int:
    runs = []
    for path in args.runs:
        with open(path) as fh:
            doc = json.load(fh)
        for payload in doc["results"]:
            record = harness.record_from_dict(payload)
            archive = harness.ParetoArchive(
                max(1, len(record.archive_solutions)),
                [
                    harness.ArchiveEntry(sol, obj)
                    for sol, obj in zip(record.archive_solutions, record.archive_objectives)
                ],
            )
            runs.append((record.scenario, archive))
    dataset = cvae_mod.build_dataset(runs)
    hyper = cvae_mod.TrainHyper(
        lr=args.lr, epochs=args.epochs, batch=args.batch,
        seed=args.seed, latent_dim=args.latent,
    )
    model, curve = cvae_mod.train(dataset, runs[0][0], hyper)
    cvae_mod.save_model(model, args.out)
    print(f"wrote {args.out}: {len(dataset)} pairs, final loss {curve[-1]:.6f}")
    return EXIT_OK


def _campaign(args) -> int:
    cfg = harness.CampaignConfig(
        seeds=tuple(args.seeds),
        algorithms=tuple(args.algos),
        spec=ScenarioSpec(
            n_uav=args.n_uav,
            n_eaves_known=args.n_eaves_known,
            n_eaves_unknown=args.n_eaves_unknown,
        ),
        population=args.pop,
        t_max=args.iters,
        grid_resolution_deg=args.grid_deg,
        warm_model_path=args.model,
        warm_iter_ratio=args.warm_iter_ratio,
        warm_mix=args.warm_mix,
        jobs=args.jobs,
    )
    records = harness.run_campaign(cfg)
    paths = harness.emit_results(records, args.out_dir)
    print(f"wrote {len(paths)} files under {args.out_dir}")
    return EXIT_OK


def _robustness(args) -> int:
    scenario = load_scenario(args.scenario)
    solution = load_solution(args.solution)
    params = {
        "phase_sync": {
            "omega_c": args.omega_c, "q1": args.q1, "q2": args.q2, "delta_t": args.delta_t,
        },
        "csi_psk": {"order": args.psk_order},
        "jitter": {"max_drift_m": args.max_drift},
    }[args.kind]
    perturbation = harness.Perturbation(kind=args.kind, params=params, seed=args.seed)
    grid = AngularGrid.from_degrees(args.grid_deg)
    evaluator = ObjectiveEvaluator(
        scenario, grid,
        window_half_angle=math.radians(args.window_deg),
        window_fine_resolution=math.radians(args.window_fine_deg),
    )
    rows = []
    for trial in range(args.trials):
        report = harness.perturb_and_reevaluate(
            solution, scenario, perturbation, grid, trial=trial, evaluator=evaluator
        )
        rows.append(
            {
                "trial": trial,
                "delta_f1_bps": report.delta_f1_bps,
                "delta_f2_db": report.delta_f2_db,
            }
        )
    doc = {"kind": args.kind, "params": params, "seed": args.seed, "trials": rows}
    with open(args.out, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")
    mean_f1 = float(np.mean([abs(r["delta_f1_bps"]) for r in rows]))
    mean_f2 = float(np.mean([abs(r["delta_f2_db"]) for r in rows]))
    print(f"wrote {args.out}: mean |df1|={mean_f1:.4g} bps, mean |df2|={mean_f2:.4g} dB")
    return EXIT_OK


def _beam_pattern(args) -> int:
    scenario = load_scenario(args.scenario)
    solution = load_solution(args.solution)
    grid = AngularGrid.from_degrees(args.grid)
    p = scenario.channel
    lines = ["array,theta_rad,phi_rad,af_magnitude,gain_linear"]
    for i in (0, 1):
        state = ArrayState(positions=solution.positions[i], weights=solution.weights[i])
        pattern = evaluate_pattern(state, p.wavelength, grid, p.element_pattern)
        gains = (
            4.0 * math.pi * pattern.magnitude ** 2 * p.efficiency / pattern.power_integral
        )
        for theta, phi, mag, gain in zip(pattern.theta, pattern.phi, pattern.magnitude, gains):
            lines.append(f"{i},{theta!r},{phi!r},{mag!r},{gain!r}")
    Path(args.csv).write_text("\n".join(lines) + "\n")
    print(f"wrote {args.csv}")
    return EXIT_OK


def _report(args) -> int:
    records = []
    for path in args.runs:
        with open(path) as fh:
            doc = json.load(fh)
        records.extend(harness.record_from_dict(r) for r in doc["results"])
    paths = harness.emit_results(records, args.out_dir, formats=tuple(args.format))
    print(f"wrote {len(paths)} files under {args.out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmbeam", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    scen = sub.add_parser("scenario", help="scenario tools").add_subparsers(
        dest="scenario_verb", required=True
    )
    gen = scen.add_parser("gen", help="generate a scenario file")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--n-uav", type=int, default=16)
    gen.add_argument("--n-eaves-known", type=int, default=4)
    gen.add_argument("--n-eaves-unknown", type=int, default=2)
    gen.add_argument("--separation", type=float, default=5000.0)
    gen.add_argument("--side", type=float, default=100.0)
    gen.add_argument("--alt-min", type=float, default=70.0)
    gen.add_argument("--alt-max", type=float, default=120.0)
    gen.add_argument("--d-min", type=float, default=0.5)
    gen.add_argument("--preset", default="urban-default")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_scenario_gen)

    opt = sub.add_parser("optimize", help="run one optimization")
    opt.add_argument("--scenario", required=True)
    opt.add_argument("--algo", choices=["gensi", "moalo", "laa"], default="gensi")
    opt.add_argument("--pop", type=int, default=50)
    opt.add_argument("--iters", type=int, default=500)
    opt.add_argument("--seed", type=int, default=0)
    opt.add_argument("--init", choices=["cold", "warm"], default="cold")
    opt.add_argument("--model", default=None)
    opt.add_argument("--warm-mix", type=float, default=1.0)
    opt.add_argument("--grid-deg", type=float, default=5.0)
    opt.add_argument("--drift-radius", type=float, default=20.0)
    opt.add_argument("--out", required=True)
    opt.set_defaults(func=_optimize)

    tr = sub.add_parser("train-cvae", help="train the generator on run files")
    tr.add_argument("--runs", nargs="+", required=True)
    tr.add_argument("--lr", type=float, default=5e-4)
    tr.add_argument("--epochs", type=int, default=200)
    tr.add_argument("--batch", type=int, default=32)
    tr.add_argument("--latent", type=int, default=20)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True)
    tr.set_defaults(func=_train_cvae)

    camp = sub.add_parser("campaign", help="run a benchmark campaign")
    camp.add_argument("--seeds", type=int, nargs="+", required=True)
    camp.add_argument("--algos", nargs="+", required=True)
    camp.add_argument("--n-uav", type=int, default=16)
    camp.add_argument("--n-eaves-known", type=int, default=4)
    camp.add_argument("--n-eaves-unknown", type=int, default=2)
    camp.add_argument("--pop", type=int, default=50)
    camp.add_argument("--iters", type=int, default=500)
    camp.add_argument("--grid-deg", type=float, default=5.0)
    camp.add_argument("--model", default=None)
    camp.add_argument("--warm-iter-ratio", type=float, default=0.4)
    camp.add_argument("--warm-mix", type=float, default=1.0)
    camp.add_argument("--jobs", type=int, default=1)
    camp.add_argument("--out-dir", required=True)
    camp.set_defaults(func=_campaign)

    rob = sub.add_parser("robustness", help="perturb and re-evaluate a solution")
    rob.add_argument("--scenario", required=True)
    rob.add_argument("--solution", required=True)
    rob.add_argument("--kind", choices=["phase_sync", "csi_psk", "jitter"], required=True)
    rob.add_argument("--omega-c", type=float, default=2 * math.pi * 915e6)
    rob.add_argument("--q1", type=float, default=1e-9)
    rob.add_argument("--q2", type=float, default=1e-8)
    rob.add_argument("--delta-t", type=float, default=1e-3)
    rob.add_argument("--psk-order", type=int, default=16)
    rob.add_argument("--max-drift", type=float, default=0.5)
    rob.add_argument("--trials", type=int, default=100)
    rob.add_argument("--seed", type=int, default=0)
    rob.add_argument("--grid-deg", type=float, default=5.0)
    rob.add_argument("--window-deg", type=float, default=2.5)
    rob.add_argument("--window-fine-deg", type=float, default=0.25)
    rob.add_argument("--out", required=True)
    rob.set_defaults(func=_robustness)

    beam = sub.add_parser("beam", help="beam pattern tools").add_subparsers(
        dest="beam_verb", required=True
    )
    pat = beam.add_parser("pattern", help="emit (theta, phi, |AF|, gain) rows")
    pat.add_argument("--scenario", required=True)
    pat.add_argument("--solution", required=True)
    pat.add_argument("--grid", type=float, default=1.0)
    pat.add_argument("--csv", required=True)
    pat.set_defaults(func=_beam_pattern)

    rep = sub.add_parser("report", help="re-emit result files from run records")
    rep.add_argument("--runs", nargs="+", required=True)
    rep.add_argument("--format", nargs="+", default=["json", "csv"], choices=["json", "csv"])
    rep.add_argument("--out-dir", required=True)
    rep.set_defaults(func=_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PlacementBudgetError as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except cvae_mod.CheckpointMismatchError as exc:
        print(f"checkpoint mismatch: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (ScenarioError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())

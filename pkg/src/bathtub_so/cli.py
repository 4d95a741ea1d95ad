"""Command-line entry point: ``bathtub-so <subcommand> ...``.

Exit codes: 0 success, 2 configuration or validation error, 3 numerical failure.
Set ``BATHTUB_THREADS`` to cap BLAS threads.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .cost import class_costs, cost_field
from .dynamics import solve_dynamics
from .gradient import objective, objective_and_gradient
from .io import (ScenarioError, emit_particles, emit_results, load_scenario, pattern_rows, read_pattern,
                 save_scenario, write_csv)
from .model import BathtubError
from .optimize import RULES, StepSchedule, optimize, optimize_multistart, random_feasible
from .particles import aggregate, initial_particles, sample_trips, simulate_particles
from .projection import project
from .scenarios import BUILTIN

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
CONFIG_CODES = {"config_error", "invalid_scenario", "dimension_mismatch", "invalid_supply", "empty_row"}


def _scenario(source: str):
    """A scenario file, or the name of a built-in generator with default options."""
    if not Path(source).exists() and source in BUILTIN:
        sc = BUILTIN[source]()
        problems = sc.validate()
        if problems:
            raise ScenarioError(problems)
        return sc
    return load_scenario(source)


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite values in the solution")


def cmd_make_scenario(args) -> int:
    opts = {}
    if args.total is not None:
        opts["total"] = args.total
    if args.seed is not None and args.name == "lyon-like":
        opts["seed"] = args.seed
    for key in ("dt", "dx"):
        if getattr(args, key) is not None:
            opts[key] = getattr(args, key)
    try:
        sc = BUILTIN[args.name](**opts)
    except TypeError as exc:
        raise BathtubError("config_error", str(exc)) from None
    for p in save_scenario(sc, args.out):
        print(p)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        sc = _scenario(args.scenario)
    except ScenarioError as exc:
        for v in exc.violations:
            print(f"{v.code}: {v.message}")
        return EXIT_CONFIG
    g = sc.grid
    print(f"ok: {sc.label or args.scenario}: {g.n_classes} classes x {g.n_length} lengths x {g.n_time} steps, "
          f"{sc.demand.total:.12g} travellers")
    return EXIT_OK


def cmd_solve(args) -> int:
    sc = _scenario(args.scenario)
    if sc.supply is not None:
        raise BathtubError("config_error", "the optimizer does not handle a downstream supply constraint")
    schedule = StepSchedule(theta0=args.theta0, rule=args.rule)
    kw = dict(schedule=schedule, max_iter=args.max_iter, stop_tol=args.stop_tol,
              keep_trajectories=args.trajectories, clock=time.perf_counter if args.timing else None)
    if args.starts > 1:
        f, hist = optimize_multistart(*sc.args, n_starts=args.starts, seed=args.seed, **kw)
    else:
        f, hist = optimize(*sc.args, **kw)
    state = solve_dynamics(f, sc.init, sc.speed, sc.grid)
    field = cost_field(state, sc.params)
    obj = float(np.sum(f * field.J))
    _finite(f, state.H, field.J)
    best = min(hist.records, key=lambda r: r.best)
    report = {
        "scenario": sc.label or args.scenario,
        "travellers": float(sc.demand.total),
        "objective": obj,
        "average_cost_s": obj / sc.demand.total if sc.demand.total > 0 else 0.0,
        "initial_objective": float(hist.records[0].objective),
        "iterations": len(hist),
        "objective_evaluations": hist.records[-1].evaluations,
        "best_iteration": best.iteration,
        "initial_residual": float(hist.records[0].residual),
        "final_residual": float(hist.records[-1].residual),
        "step_rule": schedule.rule,
    }
    for k, c in enumerate(class_costs(f, field)):
        report[f"class_{k}_mean_cost_s"] = float(c)
    counts = emit_results(args.out, hist, f, state.trajectory(), report,
                          trajectories=hist.trajectories if args.trajectories else None)
    print(f"objective {obj:.12g}  average cost {report['average_cost_s']:.6g} s  "
          f"iterations {len(hist)}  residual {report['initial_residual']:.4g} -> {report['final_residual']:.4g}")
    print(f"wrote {', '.join(counts)} to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _scenario(args.scenario)
    f = read_pattern(args.pattern, sc.grid)
    trips = sample_trips(f, sc.grid, seed=args.seed, n_particles=args.particles)
    weight = float(trips.weight[0]) if len(trips) else 1.0
    init = initial_particles(sc.init, seed=args.seed + 1, weight=weight)
    run = simulate_particles(trips, init, sc.speed, sc.grid.dt, sc.grid.t_end, sc.params)
    _finite(run.H, run.v)
    report = aggregate(run, sc.params)
    counts = emit_particles(args.out, run, report)
    for r in [*report.rows, report.overall] + ([report.unfinished] if report.unfinished else []):
        print(f"class {r.class_id}: n={r.count:.6g} mean cost {r.mean_cost:.6g} s (sd {r.cost_std:.4g}), "
              f"mean |delay| {r.mean_abs_delay_min:.4g} min")
    print(f"wrote {', '.join(counts)} to {args.out}")
    return EXIT_OK


def cmd_project(args) -> int:
    sc = _scenario(args.scenario)
    f = project(read_pattern(args.pattern, sc.grid), sc.demand)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    n = write_csv(out, ["k", "l", "n", "count"], pattern_rows(f))
    print(f"wrote {n} nonzero entries to {out}")
    return EXIT_OK


def cmd_gradient_check(args) -> int:
    sc = _scenario(args.scenario)
    rng = np.random.default_rng(args.seed)
    f = read_pattern(args.pattern, sc.grid) if args.pattern else random_feasible(sc.demand, sc.grid, rng)
    _, g, _, _ = objective_and_gradient(f, *sc.args[1:])
    rows = []
    for _ in range(args.samples):
        idx = tuple(int(rng.integers(s)) for s in f.shape)
        fp, fm = f.copy(), f.copy()
        fp[idx] += args.eps
        fm[idx] -= args.eps
        fd = (objective(fp, *sc.args[1:]) - objective(fm, *sc.args[1:])) / (2 * args.eps)
        rel = abs(g[idx] - fd) / max(abs(fd), 1e-12)
        rows.append((*idx, float(g[idx]), fd, rel))
    _finite(g, [r[4] for r in rows])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, ["k", "l", "n", "analytic", "fd", "rel_err"], rows)
    share = np.mean([r[5] <= args.tol for r in rows]) if rows else 1.0
    print(f"{share:.1%} of {len(rows)} coordinates within relative error {args.tol:g}; wrote {out}")
    return EXIT_OK if share >= args.min_pass else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bathtub-so", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    scen_help = "scenario YAML file or a built-in name (" + ", ".join(BUILTIN) + ")"

    s = sub.add_parser("make-scenario", help="write a built-in scenario to YAML + CSV files")
    s.add_argument("name", choices=sorted(BUILTIN))
    s.add_argument("--out", required=True, type=Path, help="YAML path; side files go next to it")
    s.add_argument("--total", type=float, help="total travellers")
    s.add_argument("--seed", type=int, help="random seed (lyon-like trip lengths)")
    s.add_argument("--dt", type=float)
    s.add_argument("--dx", type=float)
    s.set_defaults(func=cmd_make_scenario)

    s = sub.add_parser("validate", help="check a scenario and list violations")
    s.add_argument("--scenario", required=True, help=scen_help)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("solve-so", help="compute the social-optimum departure pattern")
    s.add_argument("--scenario", required=True, help=scen_help)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--stop-tol", type=float, default=None, help="default: 1e-4 x initial residual")
    s.add_argument("--rule", choices=RULES, default="spectral")
    s.add_argument("--theta0", type=float, default=None)
    s.add_argument("--starts", type=int, default=1, help="multi-start runs from perturbed initial patterns")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trajectories", action="store_true", help="also write t,z,H,v of every iterate")
    s.add_argument("--timing", action="store_true", help="record wall time (output no longer reproducible)")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("simulate", help="particle simulation of a departure pattern")
    s.add_argument("--scenario", required=True, help=scen_help)
    s.add_argument("--pattern", required=True, type=Path, help="k,l,n,count CSV (e.g. f_star.csv)")
    s.add_argument("--particles", type=int, default=None, help="default: one per traveller")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("project", help="project a pattern onto the demand constraints")
    s.add_argument("--scenario", required=True, help=scen_help)
    s.add_argument("--pattern", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("gradient-check", help="compare the gradient with central finite differences")
    s.add_argument("--scenario", required=True, help=scen_help)
    s.add_argument("--pattern", type=Path, default=None, help="default: a random feasible pattern")
    s.add_argument("--samples", type=int, default=50)
    s.add_argument("--eps", type=float, default=1e-3, help="finite-difference step in travellers")
    s.add_argument("--tol", type=float, default=1e-3)
    s.add_argument("--min-pass", type=float, default=0.95)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_gradient_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        for v in exc.violations:
            print(f"error: {v.code}: {v.message}", file=sys.stderr)
        return EXIT_CONFIG
    except BathtubError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if exc.code in CONFIG_CODES else EXIT_NUMERIC
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

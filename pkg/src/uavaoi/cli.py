"""Command line front door: gen, solve, sweep, oracle, compare, refine.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 oracle mismatch.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .formulation import (
    ParetoPoint,
    SolverFailure,
    compute_extremes,
    lambda_grid,
    pareto_sweep,
    solve_hamiltonian,
    solve_monolithic,
)
from .lp import LpIterationLimit
from .milp import MilpUnbounded
from .model import build_edge_weights, instance_to_dict, load_instance, random_instance
from .tours import MultiTour, evaluate, oracle_pareto
from .trajopt import DISC_INTERPRETATION, refine_tour

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_MISMATCH = 0, 2, 3, 4
ORACLE_MAX_K = 8


class ConfigError(ValueError):
    pass


def _instance(args):
    if args.instance:
        try:
            return load_instance(args.instance)
        except (OSError, KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"cannot read instance {args.instance}: {exc}") from exc
    if args.k < 1:
        raise ConfigError("--k must be >= 1")
    if not args.area > 0:
        raise ConfigError("--area must be > 0")
    return random_instance(args.k, area_m=args.area, seed=args.seed)


def _grid(text: str | None) -> list[float]:
    try:
        grid = lambda_grid(text)
    except ValueError as exc:
        raise ConfigError(f"bad --lambdas {text!r}: {exc}") from exc
    if not grid or any(not (0.0 <= v <= 1.0) for v in grid):
        raise ConfigError("lambda values must lie in [0, 1]")
    return grid


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cycles(tour: MultiTour) -> str:
    return json.dumps([list(c) for c in tour.cycles], separators=(",", ":"))


def _point_row(p: ParetoPoint, refined=None) -> dict:
    row = {
        "lambda": p.lam,
        "avg_aoi_s": p.avg_aoi,
        "energy_j": p.energy,
        "n_cycles": p.n_cycles,
        "solver": p.solver,
        "iterations": p.iterations,
        "runtime_ms": round(1000 * p.runtime, 3),
    }
    if refined is not None:
        row["refined_avg_aoi_s"] = refined.avg_aoi
        row["refined_energy_j"] = refined.energy
    row["tour"] = _cycles(p.tour)
    return row


def _write_rows(rows: list[dict], fmt: str, out: str | None):
    if fmt == "json":
        _emit(json.dumps(rows, indent=1) + "\n", out)
        return
    buf = io.StringIO()
    if rows:
        wr = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        wr.writeheader()
        wr.writerows(rows)
    _emit(buf.getvalue(), out)


def cmd_gen(args) -> int:
    inst = _instance(argparse.Namespace(instance=None, k=args.k, area=args.area, seed=args.seed))
    _emit(json.dumps(instance_to_dict(inst), indent=1) + "\n", args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = _instance(args)
    if not (0.0 <= args.lam <= 1.0):
        raise ConfigError("--lambda must lie in [0, 1]")
    w = build_edge_weights(inst)
    ext = compute_extremes(w)
    if args.solver == "benders":
        from .benders import benders_solve

        p, trace = benders_solve(w, args.lam, tol=args.tol, ext=ext)
        if args.trace:
            Path(args.trace).write_text(trace.to_csv())
    else:
        p = solve_monolithic(w, args.lam, ext)
    if args.refine:
        print(f"note: {DISC_INTERPRETATION}", file=sys.stderr)
    refined = _refine(inst, p, ext, args)
    _write_rows([_point_row(p, refined)], args.format, args.out)
    return EXIT_OK


def _refine(inst, p: ParetoPoint, ext, args):
    if not args.refine:
        return None
    lam = p.lam if np.isfinite(p.lam) else args.lam
    return refine_tour(p.tour, inst, lam, ext)


def cmd_sweep(args) -> int:
    inst = _instance(args)
    grid = _grid(args.lambdas)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    pts = pareto_sweep(inst, grid, solver=args.solver, dedupe=not args.keep_duplicates, tol=args.tol, jobs=args.jobs,
                       fill=not args.every_lambda)
    ext = compute_extremes(build_edge_weights(inst))
    if args.refine:
        print(f"note: {DISC_INTERPRETATION}", file=sys.stderr)
    _write_rows([_point_row(p, _refine(inst, p, ext, args)) for p in pts], args.format, args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    """Solvers against the exhaustive oracle on seeded instances; exit 4 on any mismatch."""
    ks = [int(k) for k in args.ks.split(",")]
    if any(k < 1 or k > ORACLE_MAX_K for k in ks):
        raise ConfigError(f"oracle sizes must lie in 1..{ORACLE_MAX_K}")
    grid = _grid(args.lambdas)
    solvers = ["monolithic", "benders"] if args.solver == "both" else [args.solver]
    from .benders import benders_solve

    bad = 0
    for n in range(args.instances):
        K = ks[n % len(ks)]
        inst = random_instance(K, area_m=args.area, seed=args.seed + n)
        w = build_edge_weights(inst)
        ext = compute_extremes(w)
        orc = oracle_pareto(w)
        for lam in grid:
            _, best = orc.best(lam, ext)
            for s in solvers:
                p = benders_solve(w, lam, tol=args.tol, ext=ext)[0] if s == "benders" else solve_monolithic(w, lam, ext)
                diff = p.objective - best
                ok = abs(diff) <= 1e-6
                bad += not ok
                print(f"{'ok' if ok else 'MISMATCH'} seed={args.seed + n} K={K} lambda={lam} solver={s} diff={diff:.3e}")
    print(f"{bad} mismatches", file=sys.stderr)
    return EXIT_MISMATCH if bad else EXIT_OK


def cmd_compare(args) -> int:
    """Multi-return at one lambda vs the Hamiltonian-only mode vs the TSP, fly-hover and refined."""
    ks = [int(k) for k in args.ks.split(",")]
    if any(k < 1 for k in ks):
        raise ConfigError("sizes must be >= 1")
    if not (0.0 <= args.lam <= 1.0):
        raise ConfigError("--lambda must lie in [0, 1]")
    print(f"note: {DISC_INTERPRETATION}", file=sys.stderr)
    rows = []
    for K in ks:
        inst = random_instance(K, area_m=args.area, seed=args.seed)
        w = build_edge_weights(inst)
        ext = compute_extremes(w)
        modes = {
            "multi-return": solve_monolithic(w, args.lam, ext).tour,
            "hamiltonian": solve_hamiltonian(w).tour,
            "tsp": ext.tsp_tour,
        }
        for mode, tour in modes.items():
            m = evaluate(tour, w)
            r = refine_tour(tour, inst, args.lam, ext)
            for traj, aoi, energy in (("fly-hover", m.avg_aoi, m.energy), ("refined", r.avg_aoi, r.energy)):
                rows.append({"k": K, "mode": mode, "trajectory": traj, "avg_aoi_s": aoi, "energy_j": energy,
                             "n_cycles": len(tour.cycles), "tour": _cycles(tour)})
    _write_rows(rows, args.format, args.out)
    return EXIT_OK


def cmd_refine(args) -> int:
    inst = _instance(args)
    if not (0.0 <= args.lam <= 1.0):
        raise ConfigError("--lambda must lie in [0, 1]")
    w = build_edge_weights(inst)
    ext = compute_extremes(w)
    if args.tour:
        try:
            tour = MultiTour.from_json(json.loads(Path(args.tour).read_text()))
            tour.validate(inst.K)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad tour file {args.tour}: {exc}") from exc
    else:
        tour = solve_monolithic(w, args.lam, ext).tour
    print(f"note: {DISC_INTERPRETATION}", file=sys.stderr)
    r = refine_tour(tour, inst, args.lam, ext)
    flagged = r.flagged
    if flagged:
        print(f"note: overlapping coverage at sensors {flagged}; entry/exit clamped", file=sys.stderr)
    _emit(r.to_json() + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uavaoi", description="Multi-return UAV tours trading average AoI against energy.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, instance=True):
        if instance:
            p.add_argument("--instance", help="instance JSON (otherwise generated from --k/--area/--seed)")
        p.add_argument("--k", type=int, default=10)
        p.add_argument("--area", type=float, default=1000.0, help="side of the square area, m")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output file (default stdout)")

    def solving(p):
        p.add_argument("--solver", choices=["monolithic", "benders"], default="monolithic")
        p.add_argument("--tol", type=float, default=1e-6, help="Benders gap tolerance")
        p.add_argument("--format", choices=["csv", "json"], default="csv")
        p.add_argument("--refine", action="store_true", help="also report refined trajectory metrics")

    p = sub.add_parser("gen", help="write a random instance")
    common(p, instance=False)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="one scalarized solve")
    common(p)
    solving(p)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--trace", help="Benders trace CSV path")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="Pareto sweep over a lambda grid")
    common(p)
    solving(p)
    p.add_argument("--lambdas", help="a:step:b or comma list (default 0:0.01:1)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--keep-duplicates", action="store_true")
    p.add_argument("--every-lambda", action="store_true",
                   help="solve every grid point instead of filling intervals whose ends share a tour")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="check solvers against exhaustive enumeration")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--ks", default="4,5,6,7")
    p.add_argument("--area", type=float, default=1000.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambdas", default="0,0.25,0.5,0.75,1")
    p.add_argument("--solver", choices=["monolithic", "benders", "both"], default="both")
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", help="multi-return vs Hamiltonian-only vs TSP")
    p.add_argument("--ks", default="6,8,10")
    p.add_argument("--area", type=float, default=1000.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("refine", help="refine a tour's trajectory inside the coverage discs")
    common(p)
    p.add_argument("--tour", help="tour JSON; solved at --lambda when omitted")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.set_defaults(func=cmd_refine)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, MilpUnbounded, LpIterationLimit, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""
Command-line entry point.

Subcommands: solve, simulate, measure, asymptotics, validate, export-plots.
Exit codes: 0 success, 1 validation or convergence failure, 2 usage/config
errors.  Every command that writes files also writes a manifest.json with a
config snapshot, seeds, timings and a checksummed inventory; no output exists
without provenance.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from .analysis import (
    boundary_asymptotics,
    detect_cycle,
    extract_policy,
    invariant_measure,
    simulate_trajectory,
    smooth_ansatz_inconsistency,
)
from .config import ConfigError, parse_config
from .model import make_grid
from .outputs import (
    load_fields_dir,
    save_fields_dir,
    save_measure,
    save_trajectory,
    write_manifest,
)
from .solver import SolveSettings, SolverDivergence, default_init, solve_stationary
from .validation import render_table, run_validation


def _add_common(p, config_positional=True):
    if config_positional:
        p.add_argument("config_pos", nargs="?", metavar="CONFIG",
                       help="configuration file")
    p.add_argument("--config", help="configuration file (alternative to the "
                   "positional form)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (recorded; the reference "
                   "implementation is deterministic regardless)")


def _resolve_config(args):
    path = getattr(args, "config_pos", None) or args.config
    if not path:
        raise ConfigError("no configuration file given")
    return parse_config(path)


def _resolve_grid(args, N, M):
    if args.grid:
        try:
            n_s, m_s = args.grid.split(",")
            return int(n_s), int(m_s)
        except ValueError:
            raise ConfigError(f"--grid expects 'N,M', got {args.grid!r}") from None
    return N, M


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    return int(os.environ.get("SOLVER_THREADS", "1"))


def build_parser():
    ap = argparse.ArgumentParser(
        prog="cartelstore",
        description="Cartel/fringe storage-market equilibrium solver")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("solve", help="solve the stationary system")
    _add_common(p)
    p.add_argument("out_pos", nargs="?", metavar="OUT", help="output directory")
    p.add_argument("--out", help="output directory")
    p.add_argument("--grid", help="override grid as N,M")
    p.add_argument("--dt", type=float, default=None, help="pseudo-time step")
    p.add_argument("--max-iters", type=int, default=2_000_000)
    p.add_argument("--tol-residual", type=float, default=1e-6)
    p.add_argument("--tol-delta", type=float, default=None,
                   help="successive-difference tolerance (disabled by default)")
    p.add_argument("--init-from", help="resume from a previous solve directory")

    p = sub.add_parser("simulate", help="Euler trajectory on solved fields")
    p.add_argument("fields", help="directory produced by solve")
    p.add_argument("--k0", type=float, required=True)
    p.add_argument("--z0", type=float, required=True)
    p.add_argument("--T", type=float, required=True, help="horizon in years")
    p.add_argument("--seed", type=int, default=None,
                   help="fringe-noise seed; omit for the noiseless run")
    p.add_argument("--dt-sim", type=float, default=1e-3)
    p.add_argument("--out", help="output directory (default: fields dir)")
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("measure", help="invariant-measure histogram")
    p.add_argument("fields", help="directory produced by solve")
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--burn-in", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dt-sim", type=float, default=1e-3)
    p.add_argument("--out", help="output directory (default: fields dir)")
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("asymptotics", help="boundary-expansion closed forms")
    _add_common(p)
    p.add_argument("--z", type=float, default=0.5, help="fringe level")

    p = sub.add_parser("validate", help="oracle/invariant/acceptance suite")
    _add_common(p)
    p.add_argument("--grid", help="override grid as N,M (the solve check caps "
                   "the grid at 100,100 regardless)")
    p.add_argument("--dt", type=float, default=None, help="solve-check step")
    p.add_argument("--seed", type=int, default=20240901)
    p.add_argument("--skip-solve", action="store_true",
                   help="skip the reduced-grid solve check")
    p.add_argument("--out", help="also write the report and a manifest here")
    p.add_argument("--inject-flux-bug", action="store_true",
                   help=argparse.SUPPRESS)   # fault-injection test hook

    p = sub.add_parser("export-plots", help="emit gnuplot scripts for the CSVs")
    p.add_argument("fields", help="directory produced by solve")
    p.add_argument("--out", help="output directory (default: fields dir)")
    p.add_argument("--threads", type=int, default=None)
    return ap


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    params, N, M = _resolve_config(args)
    N, M = _resolve_grid(args, N, M)
    out = Path(args.out_pos or args.out or "out")
    grid = make_grid(params, N, M)
    settings = SolveSettings(
        dt=args.dt if args.dt is not None else 1e-5,
        max_iters=args.max_iters,
        tol_residual=args.tol_residual,
        tol_delta=args.tol_delta,
    )
    if args.init_from:
        init_params, init_grid, init = load_fields_dir(args.init_from)
        if init_grid.shape != grid.shape:
            print(f"error: --init-from grid {init_grid.shape} != {grid.shape}",
                  file=sys.stderr)
            return 2
    else:
        init = default_init(params, grid)
    t_setup = time.perf_counter()
    try:
        fields, report = solve_stationary(params, grid, init, settings)
    except SolverDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    t_solve = time.perf_counter()
    policy = extract_policy(fields, grid, params, diag=report.diag)
    out.mkdir(parents=True, exist_ok=True)
    written = save_fields_dir(out, grid, fields, policy)
    t_io = time.perf_counter()
    branches = report.diag
    extra = {
        "converged": report.converged,
        "stop_reason": report.stop_reason,
        "iterations": report.iterations,
        "residual_sup": report.residual_sup,
        "dt": settings.dt,
        "threads": _threads(args),
        "branch_kmin": "".join(
            "B" if b else "A" for b in branches.price_controlled_kmin),
        "branch_kmax": "".join(
            "B" if b else "A" for b in branches.price_controlled_kmax),
    }
    write_manifest(out, "solve", params, N, M, written,
                   {"setup": t_setup - t0, "solve": t_solve - t_setup,
                    "io": t_io - t_solve}, seed=None, extra=extra)
    print(f"solve: {'converged' if report.converged else 'NOT CONVERGED'} "
          f"after {report.iterations} iterations, residual "
          f"{report.residual_sup:.3e}, wrote {len(written) + 1} files to {out}")
    return 0 if report.converged else 1


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    params, grid, fields = load_fields_dir(args.fields)
    out = Path(args.out or args.fields)
    traj = simulate_trajectory(fields, grid, params, args.k0, args.z0,
                               dt_sim=args.dt_sim, T=args.T, seed=args.seed)
    period = None
    if args.seed is None:
        period = detect_cycle(traj)
    out.mkdir(parents=True, exist_ok=True)
    save_trajectory(out / "trajectory.csv", traj,
                    header_extra={"k0": args.k0, "z0": args.z0})
    write_manifest(out, "simulate", params, grid.N, grid.M, ["trajectory.csv"],
                   {"total": time.perf_counter() - t0}, seed=args.seed,
                   extra={"T": args.T, "k0": args.k0, "z0": args.z0,
                          "period_years": period,
                          "threads": _threads(args)},
                   name="simulate_manifest.json")
    print(f"simulate: T={args.T} period="
          f"{'none' if period is None else f'{period:.3f}'} -> {out}")
    return 0


def cmd_measure(args) -> int:
    t0 = time.perf_counter()
    params, grid, fields = load_fields_dir(args.fields)
    out = Path(args.out or args.fields)
    hist = invariant_measure(fields, grid, params, T=args.T,
                             burn_in=args.burn_in, seed=args.seed,
                             dt_sim=args.dt_sim)
    out.mkdir(parents=True, exist_ok=True)
    save_measure(out / "measure.csv", hist, grid)
    write_manifest(out, "measure", params, grid.N, grid.M, ["measure.csv"],
                   {"total": time.perf_counter() - t0}, seed=args.seed,
                   extra={"T": args.T, "burn_in": args.burn_in,
                          "threads": _threads(args)},
                   name="measure_manifest.json")
    print(f"measure: mass {hist.density.sum():.12f} -> {out}")
    return 0


def cmd_asymptotics(args) -> int:
    params, _, _ = _resolve_config(args)
    z = args.z
    data = boundary_asymptotics(params, z)
    ae = params.alpha * params.epsilon
    cond = ae * ae + ae - 1.0
    print(f"boundary expansion at empty storage, z={z}")
    print(f"  V0            = {data.V0:.10g}")
    print(f"  p0            = {data.p0:.10g}")
    print(f"  lambda_ratio  = {data.lambda_ratio:.10g}")
    print(f"  x_plus        = {data.x_plus:.10g}")
    print(f"  x_minus       = {data.x_minus:.10g}")
    print(f"  gamma         = {data.gamma:.10g}")
    print(f"  beta          = {data.beta:.10g}")
    print(f"  exponent      = {data.exponent}")
    print(f"  feasible      = {data.feasible}{' (' + data.note + ')' if data.note else ''}")
    print(f"  uniqueness condition (alpha*eps)^2 + alpha*eps - 1 = {cond:.10g}")
    if cond <= 0.0:
        print("  warning: uniqueness condition not satisfied; the expansion "
              "pair may be non-unique")
    if data.feasible:
        print(f"  root residual = {data.residual_root:.3e}, "
              f"normalization residual = {data.residual_norm:.3e}")
    rep = smooth_ansatz_inconsistency(params, z)
    print("smooth (exponent-one) ansatz:")
    print(f"  V0 = {rep.V0:.10g}, p0 = {rep.p0:.10g}")
    print(f"  slope_p = {rep.slope_p:.10g}, slope_v = {rep.slope_v:.10g}")
    if rep.degenerate:
        print("  degenerate linear system; no residual")
    else:
        print(f"  first-order inconsistency residual = {rep.residual:.10g} "
              f"({'singular boundary layer expected' if rep.residual > 1e-10 else 'consistent'})")
    return 0


def cmd_validate(args) -> int:
    params, N, M = _resolve_config(args)
    N, M = _resolve_grid(args, N, M)
    t0 = time.perf_counter()
    results, timings = run_validation(params, N, M, seed=args.seed,
                                      inject_flux_bug=args.inject_flux_bug,
                                      solve_dt=args.dt,
                                      skip_solve=args.skip_solve)
    table = render_table(results)
    print(table)
    total = time.perf_counter() - t0
    print(f"total runtime {total:.1f}s "
          f"({', '.join(f'{k}={v:.1f}s' for k, v in timings.items())})")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "validation.txt").write_text(table + "\n")
        write_manifest(out, "validate", params, N, M, ["validation.txt"],
                       timings, seed=args.seed,
                       extra={"all_passed": all(r.passed for r in results),
                              "runtime_budget_s": round(total, 3),
                              "threads": _threads(args)})
    return 0 if all(r.passed for r in results) else 1


_GNUPLOT_SURFACES = (
    ("q_star", "optimal cartel production"),
    ("p", "price"),
    ("drift_k", "storage drift"),
    ("drift_z", "fringe drift"),
    ("u", "cartel value"),
)


def cmd_export_plots(args) -> int:
    src = Path(args.fields)
    out = Path(args.out or args.fields)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, title in _GNUPLOT_SURFACES:
        gp = out / f"plot_{stem}.gp"
        gp.write_text(
            f"# gnuplot script: {title} surface\n"
            f"set datafile separator ','\n"
            f"set title '{title}'\n"
            f"set xlabel 'k'\nset ylabel 'z'\n"
            f"set dgrid3d 101,101\nset pm3d\nset hidden3d\n"
            f"splot '{(src / (stem + '.csv'))}' every ::1 using 1:2:3 "
            f"with lines notitle\n")
        written.append(gp.name)
    gp = out / "plot_measure.gp"
    gp.write_text(
        "# gnuplot script: invariant measure contours (log scale)\n"
        "set datafile separator ','\n"
        "set title 'invariant measure (log10)'\n"
        "set xlabel 'k'\nset ylabel 'z'\nset view map\n"
        "set dgrid3d 101,101\nset pm3d\n"
        f"splot '{(src / 'measure.csv')}' every ::1 using 1:2:4 "
        "with pm3d notitle\n")
    written.append(gp.name)
    gp = out / "plot_cycle.gp"
    gp.write_text(
        "# gnuplot script: trajectory time series (production, price, k, z)\n"
        "set datafile separator ','\n"
        "set multiplot layout 2,2\n"
        f"plot '{(src / 'trajectory.csv')}' every ::1 using 1:5 with lines title 'q'\n"
        f"plot '{(src / 'trajectory.csv')}' every ::1 using 1:4 with lines title 'p'\n"
        f"plot '{(src / 'trajectory.csv')}' every ::1 using 1:2 with lines title 'k'\n"
        f"plot '{(src / 'trajectory.csv')}' every ::1 using 1:3 with lines title 'z'\n"
        "unset multiplot\n")
    written.append(gp.name)
    print(f"export-plots: wrote {len(written)} gnuplot scripts to {out}")
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        handler = {
            "solve": cmd_solve,
            "simulate": cmd_simulate,
            "measure": cmd_measure,
            "asymptotics": cmd_asymptotics,
            "validate": cmd_validate,
            "export-plots": cmd_export_plots,
        }[args.cmd]
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

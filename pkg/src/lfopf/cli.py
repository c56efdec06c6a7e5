"""Command-line entry point.

Commands: solve, sweep, compare-modes, compare-hvdc, probe, validate,
check-derivs. Exit codes: 0 success, 1 solver failure, 2 data/validation/
configuration error. Frequencies on the command line are in Hz. Every run
logs its fully resolved configuration and writes it to config.json in the
output directory for reproducibility; CSV outputs are byte-identical
across repeated runs on the same inputs (wall-clock times only ever go to
the plain-text stats report).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import cases as bundled
from .analysis import (
    compare_hvdc,
    compare_modes,
    frequency_sweep,
    local_minima_probe,
    solve_opf,
    solver_stats,
    write_comparison_csv,
    write_probe_report,
    write_solution_report,
    write_stats_text,
    write_sweep_csv,
)
from .formulation import ConfigError, ControlMode, NetworkInvalidError, assemble
from .ingest import IngestError, ParseError, dump_network, merge, parse_case, parse_extension
from .network import validate_network
from .nlp import SolverOptions, check_derivatives

log = logging.getLogger("lfopf")

MODES = {m.value: m for m in ControlMode}

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_DATA = 2


def _add_common(p: argparse.ArgumentParser, needs_ext: bool = False):
    p.add_argument("--case", required=True,
                   help="case file path or bundled name (e.g. corridor)")
    p.add_argument("--ext", required=needs_ext, default=None,
                   help="extension document path or bundled name")
    p.add_argument("--out", default=None,
                   help="output directory (default ./out; env LFOPF_OUT overrides the default)")
    p.add_argument("--losses", choices=["data", "on", "off"], default="data",
                   help="converter loss handling (default: as declared in the data)")
    p.add_argument("--tol", type=float, default=1e-8, help="KKT tolerance")
    p.add_argument("--max-iter", type=int, default=3000)
    p.add_argument("--mu0", type=float, default=0.1, help="initial barrier parameter")
    p.add_argument("--hessian", choices=["fd", "bfgs", "gn"], default="fd")
    p.add_argument("--no-line-search", action="store_true")
    p.add_argument("--no-plots", action="store_true", help="skip PNG rendering")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="lfopf",
        description="multi-frequency optimal power flow engine")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one OPF and write the solution report")
    _add_common(p)
    p.add_argument("--mode", choices=sorted(MODES), default="lfac")
    p.add_argument("--pin-hz", type=float, default=None,
                   help="pin every variable-frequency subnetwork at this frequency")
    p.add_argument("--trials", type=int, default=1,
                   help="repeat the solve N times and write solver statistics")
    p.add_argument("--timings", action="store_true",
                   help="include wall-clock times in the stats report")

    p = sub.add_parser("sweep", help="fixed-frequency sweep over a range")
    _add_common(p, needs_ext=True)
    p.add_argument("--from", dest="from_hz", type=float, required=True)
    p.add_argument("--to", dest="to_hz", type=float, required=True)
    p.add_argument("--step", type=float, default=0.1)

    p = sub.add_parser("compare-modes", help="control-mode comparison vs the no-upgrade baseline")
    _add_common(p, needs_ext=True)
    p.add_argument("--modes", default="lfac,pq,f",
                   help="comma list from lfac,pq,f,hvdc (default lfac,pq,f)")

    p = sub.add_parser("compare-hvdc", help="DC-conversion comparison over (k_cond, k_ins) pairs")
    _add_common(p, needs_ext=True)
    p.add_argument("--k", action="append", default=None, metavar="KC:KI",
                   help="one k_cond:k_ins pair; repeatable (default: the four standard pairs)")

    p = sub.add_parser("probe", help="local-minima diagnostics over frequency windows")
    _add_common(p, needs_ext=True)
    p.add_argument("--window-hz", type=float, default=5.0)
    p.add_argument("--start-step-hz", type=float, default=10.0)

    p = sub.add_parser("validate", help="structural validation of case + extension")
    _add_common(p)
    p.add_argument("--dump", action="store_true", help="print the canonical network dump")

    p = sub.add_parser("check-derivs", help="finite-difference check of the assembled derivatives")
    _add_common(p)
    p.add_argument("--mode", choices=sorted(MODES), default="lfac")
    p.add_argument("--deriv-tol", type=float, default=1e-6)
    return ap


def _solver_options(args) -> SolverOptions:
    return SolverOptions(tol_kkt=args.tol, max_iter=args.max_iter, mu0=args.mu0,
                         hessian=args.hessian, line_search=not args.no_line_search)


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("LFOPF_OUT") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(args):
    case_file = bundled.resolve(args.case)
    case = parse_case(case_file.read_text())
    ext = None
    if args.ext:
        ext_file = bundled.resolve(args.ext)
        ext = parse_extension(ext_file.read_text())
    net = merge(case, ext)
    return case, ext, net


def _log_config(args, out: Path | None):
    cfg = {k: (str(v) if isinstance(v, Path) else v)
           for k, v in sorted(vars(args).items()) if k != "func"}
    log.info("resolved configuration: %s", json.dumps(cfg, sort_keys=True))
    if out is not None:
        (out / "config.json").write_text(json.dumps(cfg, sort_keys=True, indent=1) + "\n")


def _check_valid(net) -> list:
    violations = validate_network(net)
    for v in violations:
        log.error("validation: %s", v)
    return violations


def _corridor(ext):
    if ext is None:
        return (), ()
    return ext.corridor.branches, ext.corridor.buses


def cmd_solve(args) -> int:
    out = _out_dir(args)
    _log_config(args, out)
    case, ext, net = _load(args)
    if _check_valid(net):
        return EXIT_DATA
    opts = _solver_options(args)
    mode = MODES[args.mode]
    sv = solve_opf(net, mode, opts=opts, pin_hz=args.pin_hz, losses=args.losses)
    write_solution_report(sv, net, out / "solution.txt")
    _write_solution_csv(sv, out / "solution.csv")
    if args.trials > 1:
        results = [sv.result]
        for _ in range(args.trials - 1):
            results.append(solve_opf(net, mode, opts=opts, pin_hz=args.pin_hz,
                                     losses=args.losses).result)
        stats = solver_stats(f"{args.case}/{args.mode}", results)
        if not args.timings:
            stats = type(stats)(label=stats.label, trials=stats.trials,
                                iters_mean=stats.iters_mean, iters_max=stats.iters_max,
                                iters_std=stats.iters_std,
                                time_mean=math.nan, time_max=math.nan, time_std=math.nan)
        write_stats_text([stats], out / "stats.txt")
    if not args.no_plots and sv.ok:
        from .plots import plot_solution
        plot_solution(sv.state.v, sv.state.p_gen, out / "solution.png",
                      title=f"{args.case} [{args.mode}]")
    if not sv.ok:
        log.error("solve failed: %s (%s)", sv.result.status.value, sv.result.message)
        return EXIT_SOLVER
    log.info("objective %.10g in %d iterations", sv.objective, sv.result.iterations)
    return EXIT_OK


def _write_solution_csv(sv, path: Path):
    lines = ["kind,id,bus,value1,value2"]
    if sv.ok:
        st = sv.state
        for b in sorted(st.v):
            lines.append(f"bus,{b},{b},{st.v[b]:.12g},{st.theta[b]:.12g}")
        for g in sorted(st.p_gen):
            gen = sv.problem.net.generator(g)
            lines.append(f"gen,{g},{gen.bus},{st.p_gen[g]:.12g},{st.q_gen[g]:.12g}")
        for (iface, k) in sorted(st.p_inj):
            side = "grid" if k == 0 else "lfac"
            lines.append(f"inj,{iface}:{side},,{st.p_inj[(iface, k)]:.12g},"
                         f"{st.q_inj[(iface, k)]:.12g}")
        for sid in sorted(st.omega_hz):
            lines.append(f"omega_hz,{sid},,{st.omega_hz[sid]:.12g},")
    path.write_text("\n".join(lines) + "\n")


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    _log_config(args, out)
    case, ext, net = _load(args)
    if _check_valid(net):
        return EXIT_DATA
    cb, cbus = _corridor(ext)
    curve = frequency_sweep(net, args.from_hz, args.to_hz, args.step,
                            opts=_solver_options(args), losses=args.losses,
                            corridor_branches=cb, corridor_buses=cbus)
    write_sweep_csv(curve, out / "sweep.csv")
    if not args.no_plots:
        from .plots import plot_sweep
        plot_sweep(curve, out / "sweep.png", title=f"{args.case} sweep")
    n_fail = sum(1 for s in curve.samples if s.status != "optimal")
    log.info("sweep complete: %d samples, %d failures", len(curve.samples), n_fail)
    best = curve.argmin()
    if best is None:
        return EXIT_SOLVER
    log.info("minimum objective %.10g at %.4g Hz (%s)",
             best.objective, best.omega_hz, best.regime)
    return EXIT_OK


def cmd_compare_modes(args) -> int:
    out = _out_dir(args)
    _log_config(args, out)
    case, ext, net = _load(args)
    if _check_valid(net):
        return EXIT_DATA
    baseline_net = merge(case)  # no upgrade: case only, scenario ignored
    modes = []
    for name in args.modes.split(","):
        name = name.strip()
        if name not in MODES:
            log.error("unknown mode %r", name)
            return EXIT_DATA
        modes.append(MODES[name])
    table = compare_modes(net, modes, baseline_net, opts=_solver_options(args),
                          losses=args.losses, scenario=args.case)
    write_comparison_csv(table, out / "comparison.csv")
    if not args.no_plots:
        from .plots import plot_comparison
        plot_comparison(table, out / "comparison.png", title=f"{args.case} modes")
    if any(r.status != "optimal" for r in table.rows):
        return EXIT_SOLVER
    return EXIT_OK


def cmd_compare_hvdc(args) -> int:
    out = _out_dir(args)
    _log_config(args, out)
    case, ext, net = _load(args)
    if _check_valid(net):
        return EXIT_DATA
    k_grid = None
    if args.k:
        k_grid = []
        for spec in args.k:
            kc, ki = spec.split(":")
            k_grid.append((float(kc), float(ki)))
    baseline_net = merge(case)
    kwargs = dict(opts=_solver_options(args), baseline_net=baseline_net,
                  losses=args.losses)
    table = (compare_hvdc(net, k_grid, **kwargs) if k_grid
             else compare_hvdc(net, **kwargs))
    write_comparison_csv(table, out / "hvdc.csv")
    if not args.no_plots:
        from .plots import plot_comparison
        plot_comparison(table, out / "hvdc.png", title=f"{args.case} DC conversion")
    if any(r.status != "optimal" for r in table.rows):
        return EXIT_SOLVER
    return EXIT_OK


def cmd_probe(args) -> int:
    out = _out_dir(args)
    _log_config(args, out)
    case, ext, net = _load(args)
    if _check_valid(net):
        return EXIT_DATA
    report = local_minima_probe(net, window_hz=args.window_hz,
                                start_step_hz=args.start_step_hz,
                                opts=_solver_options(args), losses=args.losses)
    write_probe_report(report, out / "probe.txt")
    log.info("full-range objective %.10g; consistent with windows: %s",
             report.full_objective, report.consistent)
    if math.isnan(report.full_objective):
        return EXIT_SOLVER
    return EXIT_OK


def cmd_validate(args) -> int:
    _log_config(args, None)
    case, ext, net = _load(args)
    violations = validate_network(net)
    if args.dump:
        sys.stdout.write(dump_network(net))
    if violations:
        for v in violations:
            print(f"violation: {v}")
        return EXIT_DATA
    print(f"ok: {len(net.buses)} buses, {len(net.branches)} branches, "
          f"{len(net.generators)} generators, {len(net.subnetworks)} subnetworks, "
          f"{len(net.interfaces)} interfaces")
    return EXIT_OK


def cmd_check_derivs(args) -> int:
    _log_config(args, None)
    case, ext, net = _load(args)
    if _check_valid(net):
        return EXIT_DATA
    prob = assemble(net, MODES[args.mode], losses=args.losses)
    dev = check_derivatives(prob)
    print(f"max relative derivative deviation: {dev:.3e}")
    return EXIT_OK if dev < args.deriv_tol else EXIT_SOLVER


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "compare-modes": cmd_compare_modes,
    "compare-hvdc": cmd_compare_hvdc,
    "probe": cmd_probe,
    "validate": cmd_validate,
    "check-derivs": cmd_check_derivs,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ParseError, IngestError, NetworkInvalidError, ConfigError,
            FileNotFoundError, KeyError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

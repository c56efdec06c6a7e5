"""Experiment harness: solves, frequency sweeps, mode and HVDC comparisons,
binding-constraint regime classification, local-minima probes and report
emission.

All sweeps and comparisons run sequential deterministic solves and produce
artifacts with stable ordering and fixed float formatting, so repeated runs
on identical inputs yield byte-identical delimited files. Wall-clock times
are never written into CSV outputs (they go to the plain-text stats
report), which keeps the CSVs reproducible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .converter import arm_currents, terminal_losses
from .formulation import ControlMode, OpfProblem, OpfState, assemble
from .network import MultiFrequencyNetwork
from .nlp import SolveResult, SolveStatus, SolverOptions, solve

log = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
SWEEP_COLUMNS = ("omega_hz", "objective", "status", "regime", "binding_ids")
COMPARISON_COLUMNS = ("scenario", "mode", "status", "objective",
                      "improvement_pct", "omega_opt_hz", "iters")

REGIMES = ("Angle", "Thermal", "VoltageDrop", "Mixed", "Unconstrained", "Infeasible")


# ---------------------------------------------------------------------------
# Single solve wrapper
# ---------------------------------------------------------------------------

@dataclass
class OpfSolve:
    problem: OpfProblem
    result: SolveResult
    state: OpfState | None

    @property
    def ok(self) -> bool:
        return self.result.status is SolveStatus.OPTIMAL

    @property
    def objective(self) -> float:
        return self.result.objective if self.ok else math.nan


def solve_opf(net: MultiFrequencyNetwork, mode: ControlMode, *,
              opts: SolverOptions | None = None, pin_hz=None, losses="data",
              hvdc_k=None, omega_window_hz=None, x0=None) -> OpfSolve:
    problem = assemble(net, mode, pin_hz=pin_hz, losses=losses, hvdc_k=hvdc_k,
                       omega_window_hz=omega_window_hz)
    target = problem
    if x0 is not None:
        from .nlp import with_start
        target = with_start(problem, np.asarray(x0, dtype=float))
    result = solve(target, opts)
    state = problem.unpack(result.x) if result.status is SolveStatus.OPTIMAL else None
    return OpfSolve(problem=problem, result=result, state=state)


# ---------------------------------------------------------------------------
# Binding constraints and regime classification
# ---------------------------------------------------------------------------

def binding_set(solve_: OpfSolve, tol: float = 1e-6) -> list[str]:
    """Labels of binding operating constraints at the solution.

    Covers branch angle and thermal limits, bus voltage bounds and the
    converter voltage/arm-current limits; generator bounds are omitted
    (some generator is almost always at a bound). Sorted for determinism.
    """
    if not solve_.ok:
        return []
    prob = solve_.problem
    st = solve_.state
    x = solve_.result.x
    out = []
    flows = prob.branch_flows(x)
    dc_ids = {br.id for br in prob.dc_branches}
    for br in prob.ac_branches + prob.dc_branches:
        pf, qf, pt, qt = flows[br.id]
        if math.hypot(pf, qf) >= br.s_max - tol:
            out.append(f"thermal:{br.id}:from")
        if math.hypot(pt, qt) >= br.s_max - tol:
            out.append(f"thermal:{br.id}:to")
        if br.id not in dc_ids:
            d = abs(st.theta[br.from_bus] - st.theta[br.to_bus])
            if d >= br.theta_max - tol:
                out.append(f"angle:{br.id}")
    for b in prob.buses:
        v = st.v[b.id]
        if v <= b.v_min + tol:
            out.append(f"vmin:{b.id}")
        if v >= b.v_max - tol:
            out.append(f"vmax:{b.id}")
    for iface in prob.interfaces:
        for k, term in enumerate(iface.terminals):
            side = "grid" if k == 0 else "lfac"
            v = st.v[term.bus]
            if math.isfinite(term.v_max_conv) and v >= term.v_max_conv - tol:
                out.append(f"vconv:{iface.id}:{side}")
            if math.isfinite(term.i_arm_rms_max):
                ac = arm_currents(st.p_inj[(iface.id, k)], st.q_inj[(iface.id, k)],
                                  v, iface.modulation_index)
                if ac.i_rms_sq >= term.i_arm_rms_max ** 2 - tol:
                    out.append(f"arm:{iface.id}:{side}")
    return sorted(out)


def classify_labels(binding_labels, corridor_branches, corridor_buses
                    ) -> tuple[str, list[str]]:
    """Regime label from a binding-label set and the designated corridor.

    A corridor thermal limit dominates every other category. Without it,
    angle and lower-voltage-bound binding map to Angle / VoltageDrop, or
    Mixed when both appear. The voltage-drop regime keys on the *lower*
    voltage bound at corridor buses: an upper bound held at its maximum is
    the normal transfer-maximizing profile, not a voltage-drop symptom.
    """
    cb = {str(b) for b in corridor_branches}
    cbus = {str(b) for b in corridor_buses}
    thermal = [s for s in binding_labels
               if s.startswith("thermal:") and s.split(":")[1] in cb]
    angle = [s for s in binding_labels
             if s.startswith("angle:") and s.split(":")[1] in cb]
    vdrop = [s for s in binding_labels
             if s.startswith("vmin:") and s.split(":")[1] in cbus]
    if thermal:
        return "Thermal", sorted(thermal + angle + vdrop)
    if angle and vdrop:
        return "Mixed", sorted(angle + vdrop)
    if angle:
        return "Angle", sorted(angle)
    if vdrop:
        return "VoltageDrop", sorted(vdrop)
    return "Unconstrained", []


def classify_binding(solve_: OpfSolve, net: MultiFrequencyNetwork,
                     corridor_branches, corridor_buses,
                     tol: float = 1e-6) -> tuple[str, list[str]]:
    """Regime label of a solved point (Infeasible for non-optimal results).

    Pure function of the solution; tightening tol only shrinks the binding
    set, so Unconstrained can never become a binding label.
    """
    if not solve_.ok:
        return "Infeasible", []
    return classify_labels(binding_set(solve_, tol), corridor_branches, corridor_buses)


# ---------------------------------------------------------------------------
# Frequency sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSample:
    omega_hz: float
    objective: float        # nan when the sample failed
    status: str
    regime: str
    binding: tuple[str, ...]
    iterations: int


@dataclass
class SweepCurve:
    samples: list[SweepSample]

    def argmin(self) -> SweepSample | None:
        ok = [s for s in self.samples if not math.isnan(s.objective)]
        return min(ok, key=lambda s: (s.objective, s.omega_hz)) if ok else None


def sweep_frequencies(lo_hz: float, hi_hz: float, step_hz: float) -> list[float]:
    if step_hz <= 0.0:
        raise ValueError("sweep step must be positive")
    if hi_hz < lo_hz:
        raise ValueError("sweep upper frequency below lower")
    n = int(round((hi_hz - lo_hz) / step_hz))
    freqs = [lo_hz + k * step_hz for k in range(n + 1)]
    if freqs[-1] > hi_hz + 1e-9:
        freqs.pop()
    return freqs


def frequency_sweep(net: MultiFrequencyNetwork, lo_hz: float, hi_hz: float,
                    step_hz: float, *, opts: SolverOptions | None = None,
                    losses: str = "data", corridor_branches=(), corridor_buses=(),
                    subnetworks=None, retry_from_neighbor: bool = True,
                    tol_binding: float = 1e-6) -> SweepCurve:
    """Fix the frequency, solve, and repeat across [lo_hz, hi_hz].

    All variable subnetworks are pinned to the sample frequency (or only
    those named in `subnetworks`). Failed samples are retried once from the
    nearest successful sample's solution before being recorded as failures.
    Samples are ordered by increasing frequency.
    """
    freqs = sweep_frequencies(lo_hz, hi_hz, step_hz)
    target = subnetworks
    samples: list[SweepSample] = []
    last_good_x = None
    for hz in freqs:
        pin = hz if target is None else {sid: hz for sid in target}
        try:
            sv = solve_opf(net, ControlMode.LFAC_OPF, opts=opts, pin_hz=pin, losses=losses)
        except Exception as exc:  # pinning outside a declared range, etc.
            log.warning("sweep sample %.4g Hz: %s", hz, exc)
            samples.append(SweepSample(hz, math.nan, "error", "Infeasible", (), 0))
            continue
        if not sv.ok and retry_from_neighbor and last_good_x is not None:
            retry = solve_opf(net, ControlMode.LFAC_OPF, opts=opts, pin_hz=pin,
                              losses=losses, x0=last_good_x)
            if retry.ok:
                sv = retry
        regime, _ = classify_binding(sv, net, corridor_branches, corridor_buses,
                                     tol_binding)
        if sv.ok:
            last_good_x = sv.result.x
        samples.append(SweepSample(
            omega_hz=hz, objective=sv.objective, status=sv.result.status.value,
            regime=regime,
            binding=tuple(binding_set(sv, tol_binding)) if sv.ok else (),
            iterations=sv.result.iterations))
    return SweepCurve(samples=samples)


# ---------------------------------------------------------------------------
# Mode and HVDC comparisons
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonRow:
    scenario: str
    mode: str
    status: str
    objective: float
    improvement_pct: float
    omega_opt_hz: tuple[tuple[str, float], ...]  # variable subnetworks only
    iterations: int
    wall_time: float


@dataclass
class ComparisonTable:
    baseline_objective: float
    rows: list[ComparisonRow]


def _variable_omegas(sv: OpfSolve) -> tuple[tuple[str, float], ...]:
    if sv.state is None:
        return ()
    out = []
    for s in sv.problem.net.subnetworks:
        if s.id in sv.problem.iom:
            out.append((s.id, sv.state.omega_hz[s.id]))
    return tuple(out)


def _improvement(baseline: float, objective: float) -> float:
    if math.isnan(objective) or math.isnan(baseline) or baseline == 0.0:
        return math.nan
    return 100.0 * (baseline - objective) / baseline


def _row(scenario: str, mode: str, sv: OpfSolve, baseline: float) -> ComparisonRow:
    return ComparisonRow(
        scenario=scenario, mode=mode, status=sv.result.status.value,
        objective=sv.objective,
        improvement_pct=_improvement(baseline, sv.objective),
        omega_opt_hz=_variable_omegas(sv),
        iterations=sv.result.iterations, wall_time=sv.result.wall_time)


def compare_modes(net: MultiFrequencyNetwork, modes, baseline_net: MultiFrequencyNetwork,
                  *, opts: SolverOptions | None = None, losses: str = "data",
                  scenario: str = "upgrade") -> ComparisonTable:
    """Solve the upgraded network under each control mode against the
    no-upgrade baseline. Expected orderings (lfac <= pq <= baseline,
    lfac <= f) are checked and surfaced as warnings only, since every row
    is a local solve."""
    base = solve_opf(baseline_net, ControlMode.LFAC_OPF, opts=opts)
    rows = [_row("baseline", "baseline", base, base.objective)]
    by_mode: dict[str, float] = {}
    for mode in modes:
        sv = solve_opf(net, mode, opts=opts, losses=losses)
        rows.append(_row(scenario, mode.value, sv, base.objective))
        by_mode[mode.value] = sv.objective
    tol = 1e-6

    def _warn_if_above(a: str, b: str, obj_a: float, obj_b: float):
        if not (math.isnan(obj_a) or math.isnan(obj_b)) \
                and obj_a > obj_b * (1.0 + tol) + tol:
            log.warning("mode ordering violated (likely local minimum): "
                        "%s=%.8g > %s=%.8g", a, obj_a, b, obj_b)

    if "lfac" in by_mode and "pq" in by_mode:
        _warn_if_above("lfac", "pq", by_mode["lfac"], by_mode["pq"])
    if "pq" in by_mode:
        _warn_if_above("pq", "baseline", by_mode["pq"], base.objective)
    if "lfac" in by_mode and "f" in by_mode:
        _warn_if_above("lfac", "f", by_mode["lfac"], by_mode["f"])
    return ComparisonTable(baseline_objective=base.objective, rows=rows)


DEFAULT_K_GRID = ((2.0 / 3.0, 1.0), (2.0 / 3.0, math.sqrt(2.0)),
                  (1.0, 1.0), (1.0, math.sqrt(2.0)))


def compare_hvdc(net: MultiFrequencyNetwork, k_grid=DEFAULT_K_GRID, *,
                 opts: SolverOptions | None = None,
                 baseline_net: MultiFrequencyNetwork | None = None,
                 include_lfac: bool = True, losses: str = "data") -> ComparisonTable:
    """Solve the DC-corridor configuration over a grid of (k_cond, k_ins)
    pairs, optionally alongside the frequency-variable solution on the same
    corridor. Objectives are expected to be nonincreasing in
    k_cond * k_ins^2 (warning on violation)."""
    baseline = math.nan
    rows: list[ComparisonRow] = []
    if baseline_net is not None:
        base = solve_opf(baseline_net, ControlMode.LFAC_OPF, opts=opts)
        baseline = base.objective
        rows.append(_row("baseline", "baseline", base, baseline))
    if include_lfac:
        sv = solve_opf(net, ControlMode.LFAC_OPF, opts=opts, losses=losses)
        rows.append(_row("upgrade", "lfac", sv, baseline))
    ordered = []
    for kc, ki in k_grid:
        sv = solve_opf(net, ControlMode.HVDC, opts=opts, hvdc_k=(kc, ki), losses=losses)
        rows.append(_row(f"kc={kc:.6g},ki={ki:.6g}", "hvdc", sv, baseline))
        ordered.append((kc * ki * ki, sv.objective))
    ordered.sort(key=lambda t: t[0])
    for (f0, o0), (f1, o1) in zip(ordered, ordered[1:]):
        if not (math.isnan(o0) or math.isnan(o1)) and o1 > o0 * (1.0 + 1e-6) + 1e-6:
            log.warning("hvdc capacity monotonicity violated: factor %.4g -> %.8g, "
                        "factor %.4g -> %.8g", f0, o0, f1, o1)
    return ComparisonTable(baseline_objective=baseline, rows=rows)


# ---------------------------------------------------------------------------
# Local-minima probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeWindow:
    lo_hz: float
    hi_hz: float
    status: str
    objective: float
    omega_opt_hz: tuple[tuple[str, float], ...]


@dataclass
class ProbeReport:
    full_objective: float
    full_status: str
    windows: list[ProbeWindow]
    start_objectives: tuple[float, ...]
    consistent: bool
    tol: float


def local_minima_probe(net: MultiFrequencyNetwork, *, window_hz: float = 5.0,
                       start_step_hz: float = 10.0,
                       opts: SolverOptions | None = None, losses: str = "data",
                       tol: float = 1e-6) -> ProbeReport:
    """Diagnose local minima of the variable-frequency solve.

    Solves the full-range problem from several frequency starting points,
    then re-solves restricted to consecutive windows; the report states
    whether the full-range optimum matches the windowed minimum within tol
    (relative).
    """
    var_subs = [s for s in net.subnetworks if s.is_variable]
    if not var_subs:
        raise ValueError("local-minima probe needs a variable-frequency subnetwork")
    lo = min(s.frequency.omega_min for s in var_subs) / (2.0 * math.pi)
    hi = max(s.frequency.omega_max for s in var_subs) / (2.0 * math.pi)

    prob = assemble(net, ControlMode.LFAC_OPF, losses=losses)
    start_objs = []
    best = None
    hz = lo
    starts_hz = []
    while hz < hi + 1e-9:
        starts_hz.append(min(hz, hi))
        hz += start_step_hz
    margin = 0.01 * (hi - lo)
    for s_hz in starts_hz:
        x0 = prob.x0.copy()
        for sid, idx in prob.iom.items():
            sub = net.subnetwork(sid)
            # nudge starts at the exact range ends strictly inside
            w = 2.0 * math.pi * min(max(s_hz, lo + margin), hi - margin)
            w = min(max(w, sub.frequency.omega_min), sub.frequency.omega_max)
            x0[idx] = w / prob.omega_base
        sv = solve_opf(net, ControlMode.LFAC_OPF, opts=opts, losses=losses, x0=x0)
        start_objs.append(sv.objective)
        if sv.ok and (best is None or sv.objective < best.objective):
            best = sv
    full_obj = best.objective if best is not None else math.nan
    full_status = best.result.status.value if best is not None else "failed"

    windows = []
    w_lo = lo
    while w_lo < hi - 1e-9:
        w_hi = min(w_lo + window_hz, hi)
        # retry failed windows from different interior frequency starts
        sv = None
        for frac in (0.5, 0.15, 0.85):
            wprob = assemble(net, ControlMode.LFAC_OPF, losses=losses,
                             omega_window_hz=(w_lo, w_hi))
            x0 = wprob.x0.copy()
            for sid, idx in wprob.iom.items():
                x0[idx] = 2.0 * math.pi * (w_lo + frac * (w_hi - w_lo)) / wprob.omega_base
                x0[idx] = min(max(x0[idx], wprob.lb[idx]), wprob.ub[idx])
            trial = solve_opf(net, ControlMode.LFAC_OPF, opts=opts, losses=losses,
                              omega_window_hz=(w_lo, w_hi), x0=x0)
            if sv is None or (trial.ok and not sv.ok) \
                    or (trial.ok and sv.ok and trial.objective < sv.objective):
                sv = trial
            if sv.ok:
                break
        windows.append(ProbeWindow(
            lo_hz=w_lo, hi_hz=w_hi, status=sv.result.status.value,
            objective=sv.objective, omega_opt_hz=_variable_omegas(sv)))
        w_lo = w_hi
    window_objs = [w.objective for w in windows if not math.isnan(w.objective)]
    consistent = False
    if window_objs and not math.isnan(full_obj):
        consistent = full_obj <= min(window_objs) * (1.0 + tol) + tol
    return ProbeReport(full_objective=full_obj, full_status=full_status,
                       windows=windows, start_objectives=tuple(start_objs),
                       consistent=consistent, tol=tol)


# ---------------------------------------------------------------------------
# Solver statistics (multiple trials of the same solve)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverStats:
    label: str
    trials: int
    iters_mean: float
    iters_max: int
    iters_std: float
    time_mean: float
    time_max: float
    time_std: float


def solver_stats(label: str, results: list[SolveResult]) -> SolverStats:
    iters = np.array([r.iterations for r in results], dtype=float)
    times = np.array([r.wall_time for r in results], dtype=float)
    return SolverStats(
        label=label, trials=len(results),
        iters_mean=float(iters.mean()), iters_max=int(iters.max()),
        iters_std=float(iters.std()),
        time_mean=float(times.mean()), time_max=float(times.max()),
        time_std=float(times.std()))


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return f"{x:.12g}"
    return str(x)


def _omega_cell(omegas) -> str:
    return ";".join(f"{sid}={hz:.12g}" for sid, hz in omegas)


def write_sweep_csv(curve: SweepCurve, path) -> None:
    lines = [",".join(SWEEP_COLUMNS)]
    for s in curve.samples:
        lines.append(",".join([
            _fmt(float(s.omega_hz)), _fmt(s.objective), s.status, s.regime,
            ";".join(s.binding)]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_comparison_csv(table: ComparisonTable, path) -> None:
    lines = [",".join(COMPARISON_COLUMNS)]
    for r in table.rows:
        lines.append(",".join([
            r.scenario, r.mode, r.status, _fmt(r.objective),
            _fmt(r.improvement_pct), _omega_cell(r.omega_opt_hz),
            str(r.iterations)]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_stats_text(stats: list[SolverStats], path) -> None:
    lines = ["solver statistics (per label: iterations, wall time over trials)"]
    for s in stats:
        lines.append(f"{s.label}: trials={s.trials} "
                     f"iters mean={s.iters_mean:.6g} max={s.iters_max} std={s.iters_std:.6g} "
                     f"time_s mean={s.time_mean:.4g} max={s.time_max:.4g} std={s.time_std:.4g}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_solution_report(sv: OpfSolve, net: MultiFrequencyNetwork, path, *,
                          tol_binding: float = 1e-6) -> None:
    """Deterministic human-readable solution summary."""
    lines = [f"status: {sv.result.status.value}",
             f"iterations: {sv.result.iterations}"]
    if sv.ok:
        st = sv.state
        lines.append(f"objective: {sv.objective:.12g}")
        lines.append("")
        lines.append("subnetwork frequencies (Hz):")
        for s in sorted(net.subnetworks, key=lambda s: s.id):
            tag = "variable" if s.id in sv.problem.iom else "fixed"
            lines.append(f"  {s.id}: {st.omega_hz[s.id]:.6f} ({tag})")
        lines.append("")
        lines.append("generator dispatch (pu):")
        for g in sorted(sv.problem.gens, key=lambda g: g.id):
            lines.append(f"  gen {g.id} @bus {g.bus}: p={st.p_gen[g.id]:.6f} "
                         f"q={st.q_gen[g.id]:.6f} cost={g.cost(st.p_gen[g.id]):.6f}")
        if sv.problem.interfaces:
            lines.append("")
            lines.append("converter interfaces (pu):")
            for m, iface in enumerate(sv.problem.interfaces):
                for k, term in enumerate(iface.terminals):
                    side = "grid" if k == 0 else "lfac"
                    p = st.p_inj[(iface.id, k)]
                    q = st.q_inj[(iface.id, k)]
                    loss = (terminal_losses(iface, p, q, st.v[term.bus])
                            if sv.problem.losses_on[m] else 0.0)
                    lines.append(f"  {iface.id}/{side} @bus {term.bus}: "
                                 f"p={p:.6f} q={q:.6f} loss={loss:.6f}")
        lines.append("")
        lines.append("binding constraints:")
        bound = binding_set(sv, tol_binding)
        if bound:
            lines += [f"  {b}" for b in bound]
        else:
            lines.append("  none")
    else:
        lines.append(f"message: {sv.result.message}")
    Path(path).write_text("\n".join(lines) + "\n")


def emit_reports(outdir, *, sweep: SweepCurve | None = None,
                 comparison: ComparisonTable | None = None,
                 solution: OpfSolve | None = None,
                 net: MultiFrequencyNetwork | None = None,
                 probe: "ProbeReport | None" = None,
                 stats: list[SolverStats] | None = None) -> list:
    """Write every provided artifact into outdir; returns the paths written.

    CSV files (sweep.csv, comparison.csv) are deterministic for identical
    inputs; wall-clock statistics only ever appear in stats.txt.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    if sweep is not None:
        write_sweep_csv(sweep, outdir / "sweep.csv")
        written.append(outdir / "sweep.csv")
    if comparison is not None:
        write_comparison_csv(comparison, outdir / "comparison.csv")
        written.append(outdir / "comparison.csv")
    if solution is not None:
        if net is None:
            net = solution.problem.net
        write_solution_report(solution, net, outdir / "solution.txt")
        written.append(outdir / "solution.txt")
    if probe is not None:
        write_probe_report(probe, outdir / "probe.txt")
        written.append(outdir / "probe.txt")
    if stats is not None:
        write_stats_text(stats, outdir / "stats.txt")
        written.append(outdir / "stats.txt")
    return written


def write_probe_report(report: ProbeReport, path) -> None:
    lines = [f"full-range objective: {_fmt(report.full_objective)} ({report.full_status})",
             "starts: " + ", ".join(_fmt(o) if not math.isnan(o) else "failed"
                                    for o in report.start_objectives),
             "windows:"]
    for w in report.windows:
        obj = _fmt(w.objective) if not math.isnan(w.objective) else "failed"
        lines.append(f"  [{w.lo_hz:g}, {w.hi_hz:g}] Hz: {obj} ({w.status}) "
                     f"omega* {_omega_cell(w.omega_opt_hz)}")
    lines.append(f"consistent with windowed minima (tol {report.tol:g}): "
                 f"{'yes' if report.consistent else 'NO'}")
    Path(path).write_text("\n".join(lines) + "\n")

"""Figure rendering for the CLI report path.

Every report-producing command can render a PNG next to its CSV. The
library's analysis layer stays figure-free; these helpers consume its
result objects. Uses the Agg backend so headless runs work.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .analysis import ComparisonTable, SweepCurve

REGIME_COLORS = {
    "Angle": "#d62728",
    "Thermal": "#1f77b4",
    "VoltageDrop": "#2ca02c",
    "Mixed": "#9467bd",
    "Unconstrained": "#7f7f7f",
    "Infeasible": "#000000",
}


def plot_sweep(curve: SweepCurve, path, title: str = "frequency sweep") -> None:
    """Objective vs frequency with regime-colored bands and failure marks."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    hz = [s.omega_hz for s in curve.samples]
    obj = [s.objective for s in curve.samples]
    ax.plot(hz, obj, color="#333333", lw=1.2, zorder=3)
    # contiguous regime bands as background spans
    if curve.samples:
        start = 0
        samples = curve.samples
        for k in range(1, len(samples) + 1):
            if k == len(samples) or samples[k].regime != samples[start].regime:
                lo = samples[start].omega_hz
                hi = samples[k - 1].omega_hz
                color = REGIME_COLORS.get(samples[start].regime, "#cccccc")
                ax.axvspan(lo, hi, color=color, alpha=0.15, lw=0)
                start = k
        fails = [(s.omega_hz, 0.0) for s in samples if math.isnan(s.objective)]
        if fails:
            lo = min(o for o in obj if not math.isnan(o))
            ax.scatter([f[0] for f in fails], [lo] * len(fails), marker="x",
                       color="#000000", label="failed", zorder=4)
            ax.legend(loc="best", fontsize=8)
    seen = []
    for s in curve.samples:
        if s.regime not in seen:
            seen.append(s.regime)
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("objective (cost)")
    ax.set_title(f"{title}  [{' / '.join(seen)}]", fontsize=10)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_comparison(table: ComparisonTable, path, title: str = "mode comparison") -> None:
    """Bar chart of objectives per (scenario, mode) with the baseline line."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    labels = [f"{r.scenario}\n{r.mode}" if r.mode != r.scenario else r.mode
              for r in table.rows]
    values = [r.objective for r in table.rows]
    colors = ["#7f7f7f" if r.mode == "baseline" else
              "#1f77b4" if r.mode == "lfac" else
              "#ff7f0e" if r.mode == "pq" else
              "#2ca02c" if r.mode == "f" else "#9467bd"
              for r in table.rows]
    ax.bar(range(len(values)), values, color=colors)
    if not math.isnan(table.baseline_objective):
        ax.axhline(table.baseline_objective, color="#555555", ls="--", lw=1,
                   label="baseline")
        ax.legend(loc="best", fontsize=8)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("objective (cost)")
    finite = [v for v in values if not math.isnan(v)]
    if finite:
        lo, hi = min(finite), max(finite)
        pad = 0.05 * (hi - lo) if hi > lo else 0.05 * abs(hi) + 1e-9
        ax.set_ylim(lo - pad, hi + pad)
    ax.set_title(title, fontsize=10)
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_solution(voltages: dict, dispatch: dict, path,
                  title: str = "solution") -> None:
    """Voltage profile and generator dispatch of a single solve."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.5, 3.6))
    buses = sorted(voltages)
    ax1.bar(range(len(buses)), [voltages[b] for b in buses], color="#1f77b4")
    ax1.set_xticks(range(len(buses)))
    ax1.set_xticklabels([str(b) for b in buses], fontsize=7)
    ax1.set_ylabel("|V| (pu)")
    ax1.set_title("bus voltages", fontsize=9)
    vals = [voltages[b] for b in buses]
    ax1.set_ylim(min(vals) - 0.02, max(vals) + 0.02)
    gens = sorted(dispatch)
    ax2.bar(range(len(gens)), [dispatch[g] for g in gens], color="#2ca02c")
    ax2.set_xticks(range(len(gens)))
    ax2.set_xticklabels([str(g) for g in gens], fontsize=7)
    ax2.set_ylabel("p (pu)")
    ax2.set_title("generator dispatch", fontsize=9)
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)

"""Optimal power flow formulation over a multi-frequency network.

Builds the nonlinear program: decision variables are bus voltage magnitude
and angle, generator active/reactive power, one scaled frequency per
variable-frequency subnetwork and active/reactive injections at every
converter terminal. Equalities are the nodal power balances (augmented
with converter injections at terminal buses), reference-bus angles,
interface active-power conservation and the mode couplings; inequalities
are branch angle and thermal limits, converter voltage/arm-current limits
and piecewise-cost epigraph cuts. All flows are in polar form and all
admittances are evaluated at the owning subnetwork's frequency, so the
problem is smooth in the frequency variables.

Control modes:
  LFAC_OPF  frequency free within its declared range.
  PQ_OPF    frequency pinned at the base frequency; converter power flow
            control retained.
  F_OPF     converter terminals coupled (zero net reactive exchange, equal
            voltage magnitude and angle) so the converter behaves as a
            transparent tie; frequency control retained.
  HVDC      corridor branches flagged as DC use the DC flow equation, lose
            their reactive flow and angle constraints, and their thermal
            limit applies to |p| alone.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass

import numpy as np

from .converter import smooth_arm_rms_sq, smooth_losses
from .network import (
    Branch,
    MultiFrequencyNetwork,
    PiecewiseLinearCost,
    PolynomialCost,
    series_admittance,
    shunt_susceptance,
    shunt_susceptance_domega,
    validate_network,
)


class ConfigError(ValueError):
    """Mode/topology mismatch or invalid assembly options."""


class NetworkInvalidError(ValueError):
    def __init__(self, violations):
        self.violations = violations
        super().__init__("network has structural violations:\n"
                         + "\n".join(str(v) for v in violations))


class ControlMode(enum.Enum):
    LFAC_OPF = "lfac"
    PQ_OPF = "pq"
    F_OPF = "f"
    HVDC = "hvdc"


# ---------------------------------------------------------------------------
# Standalone flow equations (scalar form, used directly in tests/reports)
# ---------------------------------------------------------------------------

def branch_flow(v_i: float, v_j: float, th_i: float, th_j: float,
                branch: Branch, omega: float) -> tuple[float, float, float, float]:
    """AC power injected into branch ends: (p_from, q_from, p_to, q_to).

    The off-nominal tap sits on the from side; the to-side expressions
    mirror the from side with the tap multiplying only the cross term and
    the phase shift negated. The branch's total shunt conductance and
    charging capacitance are split evenly between the two ends (pi halves),
    so each end's own term carries G_sh/2 and omega*C/2.
    """
    g, b = series_admittance(branch.r, branch.l, omega)
    gsh2 = branch.g_sh / 2.0
    bsh2 = omega * branch.c / 2.0
    t = branch.tap
    d = th_i - th_j - branch.shift
    cd, sd = math.cos(d), math.sin(d)
    cross = v_i * v_j / t
    p_from = v_i * v_i / (t * t) * (g + gsh2) - cross * (g * cd + b * sd)
    q_from = -v_i * v_i / (t * t) * (b + bsh2) - cross * (g * sd - b * cd)
    p_to = v_j * v_j * (g + gsh2) - cross * (g * cd - b * sd)
    q_to = -v_j * v_j * (b + bsh2) + cross * (g * sd + b * cd)
    return p_from, q_from, p_to, q_to


def hvdc_flow(v_i: float, v_j: float, branch: Branch,
              k_cond: float, k_ins: float) -> float:
    """DC power injected at the from side of a converted branch.

    Uses the zero-frequency conductance G = 1/R and the per-end shunt
    conductance; the to side is the same expression with i and j swapped.
    """
    g = 1.0 / branch.r
    gsh = branch.g_sh / 2.0
    kappa = k_cond * k_ins * k_ins / math.sqrt(3.0)
    return kappa * (v_i * v_i * (g + 4.0 / 3.0 * gsh) - v_i * v_j * g)


@dataclass
class OpfState:
    """Unpacked solution point in network coordinates (frequencies in Hz)."""
    v: dict[int, float]
    theta: dict[int, float]
    p_gen: dict[int, float]
    q_gen: dict[int, float]
    omega_hz: dict[str, float]
    p_inj: dict[tuple[str, int], float]
    q_inj: dict[tuple[str, int], float]


def dispatch_cost(net: MultiFrequencyNetwork, p_gen) -> float:
    """Total generation cost sum(c_g(p_g)) for a dispatch mapping gen id -> pu."""
    total = 0.0
    for g in net.generators:
        if g.in_service and g.id in p_gen:
            total += g.cost(p_gen[g.id])
    return total


def nodal_balance_residuals(net: MultiFrequencyNetwork, state: OpfState,
                            dc_branches: dict[int, tuple[float, float]] | None = None
                            ) -> tuple[dict[int, float], dict[int, float]]:
    """Active/reactive mismatch per bus for an arbitrary state.

    Scalar reference implementation (one branch at a time); the assembled
    problem computes the same residuals vectorized. dc_branches maps branch
    id -> (k_cond, k_ins) for ends evaluated with the DC equation.
    """
    dc_branches = dc_branches or {}
    dp = {}
    dq = {}
    for bus in net.buses:
        sub = net.subnetwork_of_bus(bus.id)
        omega = 2.0 * math.pi * state.omega_hz[sub.id]
        v = state.v[bus.id]
        bsh = shunt_susceptance(bus.shunt, omega) if bus.shunt is not None else 0.0
        dp[bus.id] = -bus.p_load - v * v * bus.g_sh
        dq[bus.id] = -bus.q_load + v * v * bsh
    for g in net.generators:
        if not g.in_service:
            continue
        dp[g.bus] += state.p_gen.get(g.id, 0.0)
        dq[g.bus] += state.q_gen.get(g.id, 0.0)
    for iface in net.interfaces:
        for k, term in enumerate(iface.terminals):
            dp[term.bus] += state.p_inj.get((iface.id, k), 0.0)
            dq[term.bus] += state.q_inj.get((iface.id, k), 0.0)
    for br in net.branches:
        if not br.in_service:
            continue
        sub = net.subnetwork_of_bus(br.from_bus)
        if br.id in dc_branches:
            kc, ki = dc_branches[br.id]
            pf = hvdc_flow(state.v[br.from_bus], state.v[br.to_bus], br, kc, ki)
            pt = hvdc_flow(state.v[br.to_bus], state.v[br.from_bus], br, kc, ki)
            qf = qt = 0.0
        else:
            omega = 2.0 * math.pi * state.omega_hz[sub.id]
            pf, qf, pt, qt = branch_flow(state.v[br.from_bus], state.v[br.to_bus],
                                         state.theta[br.from_bus], state.theta[br.to_bus],
                                         br, omega)
        dp[br.from_bus] -= pf
        dq[br.from_bus] -= qf
        dp[br.to_bus] -= pt
        dq[br.to_bus] -= qt
    return dp, dq


# ---------------------------------------------------------------------------
# Assembled problem
# ---------------------------------------------------------------------------

class OpfProblem:
    """Packed NLP view of the OPF; immutable after assembly.

    Variable layout: [V | theta | p_G | q_G | omega/omega_base |
    (p_I, q_I) x terminals | piecewise-cost epigraph]. Exposes the evaluator
    protocol consumed by lfopf.nlp (objective/gradient, equalities/
    inequalities with dense Jacobians, bounds, flat start).
    """

    def __init__(self, net: MultiFrequencyNetwork, mode: ControlMode, *,
                 pin_hz=None, losses: str = "data", hvdc_k=None,
                 omega_window_hz=None):
        violations = validate_network(net)
        if violations:
            raise NetworkInvalidError(violations)
        if losses not in ("data", "on", "off"):
            raise ConfigError(f"losses must be 'data', 'on' or 'off', got {losses!r}")
        self.net = net
        self.mode = mode
        self.omega_base = net.omega_base
        self.omega_window_hz = omega_window_hz

        self._setup_catalog(losses, hvdc_k)
        self._setup_variables(pin_hz)
        self._setup_equalities()
        self._setup_inequalities()
        # per-thread memo of the branch-flow state, so one assembled problem
        # can be evaluated by concurrent solver instances
        self._memo = threading.local()

    # -- catalog of active elements -----------------------------------------

    def _setup_catalog(self, losses, hvdc_k):
        net = self.net
        self.buses = list(net.buses)
        self.bus_pos = {b.id: k for k, b in enumerate(self.buses)}
        self.gens = [g for g in net.generators if g.in_service]
        dc_ids = {br.id for br in net.branches if br.is_dc} if self.mode is ControlMode.HVDC else set()
        if self.mode is ControlMode.HVDC and not dc_ids:
            raise ConfigError("HVDC mode requires at least one DC-flagged branch")
        self.ac_branches = [br for br in net.branches if br.in_service and br.id not in dc_ids]
        self.dc_branches = [br for br in net.branches if br.in_service and br.id in dc_ids]
        self.dc_k = {}
        for br in self.dc_branches:
            kc, ki = br.kind.k_cond, br.kind.k_ins
            if hvdc_k is not None:
                kc, ki = hvdc_k
            self.dc_k[br.id] = (kc, ki)
        self.interfaces = list(net.interfaces)
        if losses == "data":
            self.losses_on = [i.losses_enabled for i in self.interfaces]
        else:
            self.losses_on = [losses == "on"] * len(self.interfaces)

    # -- variables ------------------------------------------------------------

    def _setup_variables(self, pin_hz):
        net = self.net
        nb, ng = len(self.buses), len(self.gens)
        self.iv = 0
        self.ith = nb
        self.ipg = 2 * nb
        self.iqg = 2 * nb + ng

        if pin_hz is not None and not isinstance(pin_hz, dict):
            pin_hz = {s.id: pin_hz for s in net.subnetworks if s.is_variable}
        pin_hz = pin_hz or {}
        for sid in pin_hz:
            if not net.subnetwork(sid).is_variable:
                raise ConfigError(f"cannot pin subnetwork {sid}: frequency is not variable")

        dc_subnets = set()
        if self.mode is ControlMode.HVDC:
            dc_ids = {br.id for br in self.dc_branches}
            for s in net.subnetworks:
                in_service = {b for b in s.branch_ids if net.branch(b).in_service}
                if s.is_variable and in_service and in_service <= dc_ids:
                    dc_subnets.add(s.id)

        # Fixed omega value per subnetwork; variable ones get an index.
        self.subnet_omega_fixed: dict[str, float] = {}
        self.omega_vars: list[str] = []
        for s in net.subnetworks:
            if not s.is_variable:
                self.subnet_omega_fixed[s.id] = s.frequency.omega
            elif s.id in pin_hz:
                w = 2.0 * math.pi * pin_hz[s.id]
                f = s.frequency
                if not (f.omega_min - 1e-9 <= w <= f.omega_max + 1e-9):
                    raise ConfigError(f"pinned frequency {pin_hz[s.id]} Hz outside the "
                                      f"declared range of subnetwork {s.id}")
                self.subnet_omega_fixed[s.id] = w
            elif self.mode is ControlMode.PQ_OPF or s.id in dc_subnets:
                self.subnet_omega_fixed[s.id] = self.omega_base
            else:
                self.omega_vars.append(s.id)
        self.iom = {sid: self.iqg + ng + k for k, sid in enumerate(self.omega_vars)}

        base = self.iqg + ng + len(self.omega_vars)
        self.iinj = {}
        for iface in self.interfaces:
            for k in range(2):
                self.iinj[(iface.id, k)] = base
                base += 2  # (p, q)

        self.pwl_gens = [g for g in self.gens if isinstance(g.cost, PiecewiseLinearCost)]
        self.ipwl = {g.id: base + k for k, g in enumerate(self.pwl_gens)}
        self.n = base + len(self.pwl_gens)

        lb = np.full(self.n, -np.inf)
        ub = np.full(self.n, np.inf)
        x0 = np.zeros(self.n)
        for k, b in enumerate(self.buses):
            lb[self.iv + k], ub[self.iv + k] = b.v_min, b.v_max
            x0[self.iv + k] = min(max(1.0, b.v_min), b.v_max)
        for k, g in enumerate(self.gens):
            lb[self.ipg + k], ub[self.ipg + k] = g.p_min, g.p_max
            lb[self.iqg + k], ub[self.iqg + k] = g.q_min, g.q_max
            x0[self.ipg + k] = 0.5 * (g.p_min + g.p_max)
            x0[self.iqg + k] = 0.5 * (g.q_min + g.q_max)
        for sid in self.omega_vars:
            f = self.net.subnetwork(sid).frequency
            w_lo, w_hi = f.omega_min, f.omega_max
            if self.omega_window_hz is not None:
                w_lo = max(w_lo, 2.0 * math.pi * self.omega_window_hz[0])
                w_hi = min(w_hi, 2.0 * math.pi * self.omega_window_hz[1])
                if w_lo > w_hi:
                    raise ConfigError(
                        f"frequency window {self.omega_window_hz} Hz does not "
                        f"intersect the declared range of subnetwork {sid}")
            lb[self.iom[sid]] = w_lo / self.omega_base
            ub[self.iom[sid]] = w_hi / self.omega_base
            x0[self.iom[sid]] = 0.5 * (w_lo + w_hi) / self.omega_base
        for iface in self.interfaces:
            for k, term in enumerate(iface.terminals):
                j = self.iinj[(iface.id, k)]
                lb[j], ub[j] = term.p_min, term.p_max
                lb[j + 1], ub[j + 1] = term.q_min, term.q_max
                for jj in (j, j + 1):
                    x0[jj] = min(max(0.0, lb[jj]), ub[jj])
        for g in self.pwl_gens:
            p0 = 0.5 * (g.p_min + g.p_max)
            x0[self.ipwl[g.id]] = g.cost(p0) + 1.0
        self.lb, self.ub, self.x0 = lb, ub, x0
        self._gen_pos = {g.id: k for k, g in enumerate(self.gens)}

        # Per-branch frequency lookup (AC branches only).
        self._br_fixed_w = np.zeros(len(self.ac_branches))
        self._br_w_idx = np.full(len(self.ac_branches), -1, dtype=int)
        for k, br in enumerate(self.ac_branches):
            sub = net.subnetwork_of_bus(br.from_bus)
            if sub.id in self.iom:
                self._br_w_idx[k] = self.iom[sub.id]
            else:
                self._br_fixed_w[k] = self.subnet_omega_fixed[sub.id]

        self._bus_fixed_w = np.zeros(len(self.buses))
        self._bus_w_idx = np.full(len(self.buses), -1, dtype=int)
        for k, b in enumerate(self.buses):
            sub = net.subnetwork_of_bus(b.id)
            if sub.id in self.iom:
                self._bus_w_idx[k] = self.iom[sub.id]
            else:
                self._bus_fixed_w[k] = self.subnet_omega_fixed[sub.id]

        # Static branch parameter arrays.
        A = self.ac_branches
        self._fr = np.array([self.bus_pos[b.from_bus] for b in A], dtype=int)
        self._to = np.array([self.bus_pos[b.to_bus] for b in A], dtype=int)
        self._r = np.array([b.r for b in A])
        self._l = np.array([b.l for b in A])
        self._gsh2 = np.array([b.g_sh / 2.0 for b in A])
        self._c2 = np.array([b.c / 2.0 for b in A])
        self._tap = np.array([b.tap for b in A])
        self._shift = np.array([b.shift for b in A])

        D = self.dc_branches
        self._dfr = np.array([self.bus_pos[b.from_bus] for b in D], dtype=int)
        self._dto = np.array([self.bus_pos[b.to_bus] for b in D], dtype=int)
        self._dg = np.array([1.0 / b.r for b in D]) if D else np.zeros(0)
        self._dgsh2 = np.array([b.g_sh / 2.0 for b in D]) if D else np.zeros(0)
        self._dkappa = np.array([self.dc_k[b.id][0] * self.dc_k[b.id][1] ** 2 / math.sqrt(3.0)
                                 for b in D]) if D else np.zeros(0)

    # -- equalities -----------------------------------------------------------

    def _setup_equalities(self):
        net = self.net
        nb = len(self.buses)
        labels: list[str] = []
        labels += [f"pbal:{b.id}" for b in self.buses]
        labels += [f"qbal:{b.id}" for b in self.buses]

        ref_subnets = [s.id for s in net.subnetworks]
        if self.mode is ControlMode.F_OPF and self.interfaces:
            # Angle coupling across converters merges the angle spaces, so a
            # coupled component keeps a single reference pin.
            parent = {s.id: s.id for s in net.subnetworks}

            def find(a):
                while parent[a] != a:
                    parent[a] = parent[parent[a]]
                    a = parent[a]
                return a

            for iface in self.interfaces:
                a = net.subnetwork_of_bus(iface.terminals[0].bus).id
                b = net.subnetwork_of_bus(iface.terminals[1].bus).id
                parent[find(a)] = find(b)
            keep = {}
            for s in net.subnetworks:
                root = find(s.id)
                keep.setdefault(root, s.id)
                keep[root] = min(keep[root], s.id)
            ref_subnets = [s.id for s in net.subnetworks if keep[find(s.id)] == s.id]
        self.ref_rows = [(net.subnetwork(sid).reference_bus, sid) for sid in ref_subnets]
        labels += [f"ref:{sid}" for _, sid in self.ref_rows]
        labels += [f"ifbal:{i.id}" for i in self.interfaces]
        if self.mode is ControlMode.F_OPF:
            for i in self.interfaces:
                labels += [f"fq:{i.id}", f"fv:{i.id}", f"fth:{i.id}"]
        self.eq_labels = labels
        self.n_eq = len(labels)
        self._ifbal0 = 2 * nb + len(self.ref_rows)

    # -- inequalities -----------------------------------------------------------

    def _setup_inequalities(self):
        labels: list[str] = []
        for br in self.ac_branches:
            labels += [f"angle+:{br.id}", f"angle-:{br.id}"]
        for br in self.ac_branches:
            labels += [f"thermal:{br.id}:from", f"thermal:{br.id}:to"]
        for br in self.dc_branches:
            labels += [f"thermal:{br.id}:from", f"thermal:{br.id}:to"]
        self._conv_rows = []
        for iface in self.interfaces:
            for k, term in enumerate(iface.terminals):
                side = "grid" if k == 0 else "lfac"
                if math.isfinite(term.v_max_conv):
                    self._conv_rows.append(("vconv", iface, k))
                    labels.append(f"vconv:{iface.id}:{side}")
                if math.isfinite(term.i_arm_rms_max):
                    self._conv_rows.append(("arm", iface, k))
                    labels.append(f"arm:{iface.id}:{side}")
        self._pwl_rows = []
        for g in self.pwl_gens:
            for si, (m, b) in enumerate(g.cost.segments()):
                self._pwl_rows.append((g.id, m, b))
                labels.append(f"pwl:{g.id}:{si}")
        self.ineq_labels = labels
        self.n_ineq = len(labels)

    # -- shared evaluation ------------------------------------------------------

    def _branch_omega(self, x):
        w = self._br_fixed_w.copy()
        mask = self._br_w_idx >= 0
        if mask.any():
            w[mask] = x[self._br_w_idx[mask]] * self.omega_base
        return w

    def _common(self, x):
        """Branch flows and their partials at x, memoized on the exact x."""
        cached_x = getattr(self._memo, "x", None)
        if cached_x is not None and np.array_equal(x, cached_x):
            return self._memo.state
        nb = len(self.buses)
        V = x[self.iv:self.iv + nb]
        TH = x[self.ith:self.ith + nb]
        w = self._branch_omega(x)
        xl = w * self._l
        den = self._r ** 2 + xl ** 2
        G = self._r / den
        B = -xl / den
        dG = -2.0 * w * self._l ** 2 * self._r / den ** 2
        dB = -self._l * (self._r ** 2 - xl ** 2) / den ** 2
        bsh2 = w * self._c2
        dbsh2 = self._c2

        vi, vj = V[self._fr], V[self._to]
        d = TH[self._fr] - TH[self._to] - self._shift
        cd, sd = np.cos(d), np.sin(d)
        t = self._tap
        vi2t = vi * vi / (t * t)
        cross = vi * vj / t

        gpb = G * cd + B * sd     # G cos + B sin
        gmb = G * sd - B * cd     # G sin - B cos
        gcb = G * cd - B * sd     # G cos - B sin
        gsb = G * sd + B * cd     # G sin + B cos

        pf = vi2t * (G + self._gsh2) - cross * gpb
        qf = -vi2t * (B + bsh2) - cross * gmb
        pt = vj * vj * (G + self._gsh2) - cross * gcb
        qt = -vj * vj * (B + bsh2) + cross * gsb

        pf_vi = 2.0 * vi / (t * t) * (G + self._gsh2) - vj / t * gpb
        pf_vj = -vi / t * gpb
        pf_d = -cross * (-G * sd + B * cd)
        qf_vi = -2.0 * vi / (t * t) * (B + bsh2) - vj / t * gmb
        qf_vj = -vi / t * gmb
        qf_d = -cross * gpb
        pt_vi = -vj / t * gcb
        pt_vj = 2.0 * vj * (G + self._gsh2) - vi / t * gcb
        pt_d = cross * gsb
        qt_vi = vj / t * gsb
        qt_vj = -2.0 * vj * (B + bsh2) + vi / t * gsb
        qt_d = cross * gcb

        pf_w = vi2t * dG - cross * (dG * cd + dB * sd)
        qf_w = -vi2t * (dB + dbsh2) - cross * (dG * sd - dB * cd)
        pt_w = vj * vj * dG - cross * (dG * cd - dB * sd)
        qt_w = -vj * vj * (dB + dbsh2) + cross * (dG * sd + dB * cd)

        dc = None
        if len(self.dc_branches):
            dvi, dvj = V[self._dfr], V[self._dto]
            geff = self._dg + 4.0 / 3.0 * self._dgsh2
            dpf = self._dkappa * (dvi * dvi * geff - dvi * dvj * self._dg)
            dpt = self._dkappa * (dvj * dvj * geff - dvi * dvj * self._dg)
            dpf_vi = self._dkappa * (2.0 * dvi * geff - dvj * self._dg)
            dpf_vj = -self._dkappa * dvi * self._dg
            dpt_vi = -self._dkappa * dvj * self._dg
            dpt_vj = self._dkappa * (2.0 * dvj * geff - dvi * self._dg)
            dc = (dpf, dpt, dpf_vi, dpf_vj, dpt_vi, dpt_vj)

        self._memo.x = x.copy()
        self._memo.state = dict(V=V, TH=TH,
                                pf=pf, qf=qf, pt=pt, qt=qt,
                                pf_vi=pf_vi, pf_vj=pf_vj, pf_d=pf_d,
                                qf_vi=qf_vi, qf_vj=qf_vj, qf_d=qf_d,
                                pt_vi=pt_vi, pt_vj=pt_vj, pt_d=pt_d,
                                qt_vi=qt_vi, qt_vj=qt_vj, qt_d=qt_d,
                                pf_w=pf_w, qf_w=qf_w, pt_w=pt_w, qt_w=qt_w,
                                dc=dc)
        return self._memo.state

    def _bus_shunt_b(self, x):
        """Bus shunt susceptance and its d/d omega, per bus, at x."""
        nb = len(self.buses)
        bsh = np.zeros(nb)
        dbsh = np.zeros(nb)
        for k, b in enumerate(self.buses):
            if b.shunt is None:
                continue
            idx = self._bus_w_idx[k]
            w = x[idx] * self.omega_base if idx >= 0 else self._bus_fixed_w[k]
            bsh[k] = shunt_susceptance(b.shunt, w)
            dbsh[k] = shunt_susceptance_domega(b.shunt, w)
        return bsh, dbsh

    # -- objective ---------------------------------------------------------------

    def objective(self, x) -> float:
        total = 0.0
        for k, g in enumerate(self.gens):
            if isinstance(g.cost, PolynomialCost):
                total += g.cost(x[self.ipg + k])
            else:
                total += x[self.ipwl[g.id]]
        return total

    def gradient(self, x) -> np.ndarray:
        grad = np.zeros(self.n)
        for k, g in enumerate(self.gens):
            if isinstance(g.cost, PolynomialCost):
                grad[self.ipg + k] = g.cost.derivative(x[self.ipg + k])
            else:
                grad[self.ipwl[g.id]] = 1.0
        return grad

    def objective_hessian_diag(self, x) -> np.ndarray:
        h = np.zeros(self.n)
        for k, g in enumerate(self.gens):
            if isinstance(g.cost, PolynomialCost):
                h[self.ipg + k] = 2.0 * g.cost.c2
        return h

    # -- equalities ----------------------------------------------------------------

    def equalities(self, x) -> np.ndarray:
        c = self._common(x)
        nb = len(self.buses)
        V = c["V"]
        bsh, _ = self._bus_shunt_b(x)
        p = np.array([-b.p_load for b in self.buses])
        q = np.array([-b.q_load for b in self.buses])
        p -= V * V * np.array([b.g_sh for b in self.buses])
        q += V * V * bsh
        for k, g in enumerate(self.gens):
            p[self.bus_pos[g.bus]] += x[self.ipg + k]
            q[self.bus_pos[g.bus]] += x[self.iqg + k]
        for iface in self.interfaces:
            for k, term in enumerate(iface.terminals):
                j = self.iinj[(iface.id, k)]
                p[self.bus_pos[term.bus]] += x[j]
                q[self.bus_pos[term.bus]] += x[j + 1]
        np.subtract.at(p, self._fr, c["pf"])
        np.subtract.at(p, self._to, c["pt"])
        np.subtract.at(q, self._fr, c["qf"])
        np.subtract.at(q, self._to, c["qt"])
        if c["dc"] is not None:
            dpf, dpt = c["dc"][0], c["dc"][1]
            np.subtract.at(p, self._dfr, dpf)
            np.subtract.at(p, self._dto, dpt)

        rows = [p, q]
        rows.append(np.array([x[self.ith + self.bus_pos[bus]] for bus, _ in self.ref_rows]))
        ifb = []
        for m, iface in enumerate(self.interfaces):
            ji = self.iinj[(iface.id, 0)]
            jj = self.iinj[(iface.id, 1)]
            val = x[ji] + x[jj]
            if self.losses_on[m]:
                for k, term in enumerate(iface.terminals):
                    j = self.iinj[(iface.id, k)]
                    vterm = x[self.iv + self.bus_pos[term.bus]]
                    loss, _, _, _ = smooth_losses(x[j], x[j + 1], vterm,
                                                  iface.modulation_index,
                                                  iface.loss_coefficients)
                    val += loss
            ifb.append(val)
        rows.append(np.array(ifb))
        if self.mode is ControlMode.F_OPF:
            coup = []
            for iface in self.interfaces:
                ji = self.iinj[(iface.id, 0)]
                jj = self.iinj[(iface.id, 1)]
                bi = self.bus_pos[iface.terminals[0].bus]
                bj = self.bus_pos[iface.terminals[1].bus]
                coup += [x[ji + 1] + x[jj + 1],
                         x[self.iv + bi] - x[self.iv + bj],
                         x[self.ith + bi] - x[self.ith + bj]]
            rows.append(np.array(coup))
        return np.concatenate([r for r in rows if len(r)]) if self.n_eq else np.zeros(0)

    def eq_jacobian(self, x) -> np.ndarray:
        c = self._common(x)
        nb = len(self.buses)
        J = np.zeros((self.n_eq, self.n))
        V = c["V"]
        bsh, dbsh = self._bus_shunt_b(x)

        # d(balance)/dV own-bus shunt terms
        for k, b in enumerate(self.buses):
            J[k, self.iv + k] += -2.0 * V[k] * b.g_sh
            J[nb + k, self.iv + k] += 2.0 * V[k] * bsh[k]
            if self._bus_w_idx[k] >= 0 and dbsh[k] != 0.0:
                J[nb + k, self._bus_w_idx[k]] += V[k] * V[k] * dbsh[k] * self.omega_base
        for k, g in enumerate(self.gens):
            J[self.bus_pos[g.bus], self.ipg + k] += 1.0
            J[nb + self.bus_pos[g.bus], self.iqg + k] += 1.0
        for iface in self.interfaces:
            for k, term in enumerate(iface.terminals):
                j = self.iinj[(iface.id, k)]
                J[self.bus_pos[term.bus], j] += 1.0
                J[nb + self.bus_pos[term.bus], j + 1] += 1.0

        fr, to = self._fr, self._to
        wmask = self._br_w_idx >= 0

        def scatter(rows_base, val_vi, val_vj, val_d, val_w):
            rows_fr = rows_base + fr
            np.add.at(J, (rows_fr, self.iv + fr), -val_vi)
            np.add.at(J, (rows_fr, self.iv + to), -val_vj)
            np.add.at(J, (rows_fr, self.ith + fr), -val_d)
            np.add.at(J, (rows_fr, self.ith + to), val_d)
            if wmask.any():
                np.add.at(J, (rows_fr[wmask], self._br_w_idx[wmask]),
                          -val_w[wmask] * self.omega_base)

        def scatter_to(rows_base, val_vi, val_vj, val_d, val_w):
            rows_to = rows_base + to
            np.add.at(J, (rows_to, self.iv + fr), -val_vi)
            np.add.at(J, (rows_to, self.iv + to), -val_vj)
            np.add.at(J, (rows_to, self.ith + fr), -val_d)
            np.add.at(J, (rows_to, self.ith + to), val_d)
            if wmask.any():
                np.add.at(J, (rows_to[wmask], self._br_w_idx[wmask]),
                          -val_w[wmask] * self.omega_base)

        scatter(0, c["pf_vi"], c["pf_vj"], c["pf_d"], c["pf_w"])
        scatter_to(0, c["pt_vi"], c["pt_vj"], c["pt_d"], c["pt_w"])
        scatter(nb, c["qf_vi"], c["qf_vj"], c["qf_d"], c["qf_w"])
        scatter_to(nb, c["qt_vi"], c["qt_vj"], c["qt_d"], c["qt_w"])

        if c["dc"] is not None:
            _, _, dpf_vi, dpf_vj, dpt_vi, dpt_vj = c["dc"]
            np.add.at(J, (self._dfr, self.iv + self._dfr), -dpf_vi)
            np.add.at(J, (self._dfr, self.iv + self._dto), -dpf_vj)
            np.add.at(J, (self._dto, self.iv + self._dfr), -dpt_vi)
            np.add.at(J, (self._dto, self.iv + self._dto), -dpt_vj)

        row = 2 * nb
        for bus, _ in self.ref_rows:
            J[row, self.ith + self.bus_pos[bus]] = 1.0
            row += 1
        for m, iface in enumerate(self.interfaces):
            for k, term in enumerate(iface.terminals):
                j = self.iinj[(iface.id, k)]
                J[row, j] += 1.0
                if self.losses_on[m]:
                    vpos = self.iv + self.bus_pos[term.bus]
                    _, dp, dq, dv = smooth_losses(x[j], x[j + 1], x[vpos],
                                                  iface.modulation_index,
                                                  iface.loss_coefficients)
                    J[row, j] += dp
                    J[row, j + 1] += dq
                    J[row, vpos] += dv
            row += 1
        if self.mode is ControlMode.F_OPF:
            for iface in self.interfaces:
                ji = self.iinj[(iface.id, 0)]
                jj = self.iinj[(iface.id, 1)]
                bi = self.bus_pos[iface.terminals[0].bus]
                bj = self.bus_pos[iface.terminals[1].bus]
                J[row, ji + 1] = 1.0
                J[row, jj + 1] = 1.0
                J[row + 1, self.iv + bi] = 1.0
                J[row + 1, self.iv + bj] = -1.0
                J[row + 2, self.ith + bi] = 1.0
                J[row + 2, self.ith + bj] = -1.0
                row += 3
        return J

    # -- inequalities ----------------------------------------------------------------

    def inequalities(self, x) -> np.ndarray:
        c = self._common(x)
        TH = c["TH"]
        vals = []
        if self.ac_branches:
            d = TH[self._fr] - TH[self._to]
            tmax = np.array([b.theta_max for b in self.ac_branches])
            vals.append(np.stack([d - tmax, -d - tmax], axis=1).ravel())
            smax = np.array([b.s_max for b in self.ac_branches])
            from_sq = c["pf"] ** 2 + c["qf"] ** 2 - smax ** 2
            to_sq = c["pt"] ** 2 + c["qt"] ** 2 - smax ** 2
            vals.append(np.stack([from_sq, to_sq], axis=1).ravel())
        if self.dc_branches:
            dpf, dpt = c["dc"][0], c["dc"][1]
            smax = np.array([b.s_max for b in self.dc_branches])
            vals.append(np.stack([dpf ** 2 - smax ** 2, dpt ** 2 - smax ** 2], axis=1).ravel())
        conv = []
        for kind, iface, k in self._conv_rows:
            term = iface.terminals[k]
            vterm = x[self.iv + self.bus_pos[term.bus]]
            if kind == "vconv":
                conv.append(vterm - term.v_max_conv)
            else:
                j = self.iinj[(iface.id, k)]
                i2, _, _, _ = smooth_arm_rms_sq(x[j], x[j + 1], vterm, iface.modulation_index)
                conv.append(i2 - term.i_arm_rms_max ** 2)
        if conv:
            vals.append(np.array(conv))
        pwl = []
        for gid, m, b in self._pwl_rows:
            k = self._gen_pos[gid]
            pwl.append(m * x[self.ipg + k] + b - x[self.ipwl[gid]])
        if pwl:
            vals.append(np.array(pwl))
        return np.concatenate(vals) if vals else np.zeros(0)

    def ineq_jacobian(self, x) -> np.ndarray:
        c = self._common(x)
        J = np.zeros((self.n_ineq, self.n))
        row = 0
        nbr = len(self.ac_branches)
        if nbr:
            for k in range(nbr):
                f, t = self._fr[k], self._to[k]
                J[row, self.ith + f] = 1.0
                J[row, self.ith + t] = -1.0
                J[row + 1, self.ith + f] = -1.0
                J[row + 1, self.ith + t] = 1.0
                row += 2
            for k in range(nbr):
                f, t = self._fr[k], self._to[k]
                widx = self._br_w_idx[k]
                for (pp, qq, pv, qv, pj, qj, pd, qd, pw, qw) in (
                    (c["pf"][k], c["qf"][k], c["pf_vi"][k], c["qf_vi"][k],
                     c["pf_vj"][k], c["qf_vj"][k], c["pf_d"][k], c["qf_d"][k],
                     c["pf_w"][k], c["qf_w"][k]),
                    (c["pt"][k], c["qt"][k], c["pt_vi"][k], c["qt_vi"][k],
                     c["pt_vj"][k], c["qt_vj"][k], c["pt_d"][k], c["qt_d"][k],
                     c["pt_w"][k], c["qt_w"][k]),
                ):
                    J[row, self.iv + f] = 2.0 * pp * pv + 2.0 * qq * qv
                    J[row, self.iv + t] = 2.0 * pp * pj + 2.0 * qq * qj
                    J[row, self.ith + f] = 2.0 * pp * pd + 2.0 * qq * qd
                    J[row, self.ith + t] = -J[row, self.ith + f]
                    if widx >= 0:
                        J[row, widx] = (2.0 * pp * pw + 2.0 * qq * qw) * self.omega_base
                    row += 1
        if len(self.dc_branches):
            dpf, dpt, dpf_vi, dpf_vj, dpt_vi, dpt_vj = c["dc"]
            for k in range(len(self.dc_branches)):
                f, t = self._dfr[k], self._dto[k]
                J[row, self.iv + f] = 2.0 * dpf[k] * dpf_vi[k]
                J[row, self.iv + t] = 2.0 * dpf[k] * dpf_vj[k]
                J[row + 1, self.iv + f] = 2.0 * dpt[k] * dpt_vi[k]
                J[row + 1, self.iv + t] = 2.0 * dpt[k] * dpt_vj[k]
                row += 2
        for kind, iface, k in self._conv_rows:
            term = iface.terminals[k]
            vpos = self.iv + self.bus_pos[term.bus]
            if kind == "vconv":
                J[row, vpos] = 1.0
            else:
                j = self.iinj[(iface.id, k)]
                _, dp, dq, dv = smooth_arm_rms_sq(x[j], x[j + 1], x[vpos],
                                                  iface.modulation_index)
                J[row, j] = dp
                J[row, j + 1] = dq
                J[row, vpos] = dv
            row += 1
        for gid, m, b in self._pwl_rows:
            k = self._gen_pos[gid]
            J[row, self.ipg + k] = m
            J[row, self.ipwl[gid]] = -1.0
            row += 1
        return J

    # -- unpacking ----------------------------------------------------------------

    def unpack(self, x) -> OpfState:
        v = {b.id: float(x[self.iv + k]) for k, b in enumerate(self.buses)}
        theta = {b.id: float(x[self.ith + k]) for k, b in enumerate(self.buses)}
        p_gen = {g.id: float(x[self.ipg + k]) for k, g in enumerate(self.gens)}
        q_gen = {g.id: float(x[self.iqg + k]) for k, g in enumerate(self.gens)}
        omega_hz = {}
        for s in self.net.subnetworks:
            if s.id in self.iom:
                omega_hz[s.id] = float(x[self.iom[s.id]] * self.omega_base / (2.0 * math.pi))
            else:
                omega_hz[s.id] = self.subnet_omega_fixed[s.id] / (2.0 * math.pi)
        p_inj = {}
        q_inj = {}
        for iface in self.interfaces:
            for k in range(2):
                j = self.iinj[(iface.id, k)]
                p_inj[(iface.id, k)] = float(x[j])
                q_inj[(iface.id, k)] = float(x[j + 1])
        return OpfState(v=v, theta=theta, p_gen=p_gen, q_gen=q_gen,
                        omega_hz=omega_hz, p_inj=p_inj, q_inj=q_inj)

    def branch_flows(self, x) -> dict[int, tuple[float, float, float, float]]:
        """Per-branch end flows (p_from, q_from, p_to, q_to) at x."""
        c = self._common(x)
        flows = {}
        for k, br in enumerate(self.ac_branches):
            flows[br.id] = (float(c["pf"][k]), float(c["qf"][k]),
                            float(c["pt"][k]), float(c["qt"][k]))
        if c["dc"] is not None:
            for k, br in enumerate(self.dc_branches):
                flows[br.id] = (float(c["dc"][0][k]), 0.0, float(c["dc"][1][k]), 0.0)
        return flows


def assemble(net: MultiFrequencyNetwork, mode: ControlMode, *,
             pin_hz=None, losses: str = "data", hvdc_k=None,
             omega_window_hz=None) -> OpfProblem:
    """Assemble the OPF for a validated network under a control mode.

    pin_hz fixes variable-frequency subnetworks at a given Hz value (scalar
    for all, or a mapping per subnetwork id); losses overrides the per-
    interface losses_enabled flag ('data' honors it); hvdc_k overrides the
    (k_cond, k_ins) pair of every DC corridor in HVDC mode; omega_window_hz
    narrows every variable frequency range to the given (lo, hi) Hz window.
    """
    return OpfProblem(net, mode, pin_hz=pin_hz, losses=losses, hvdc_k=hvdc_k,
                      omega_window_hz=omega_window_hz)

"""Frequency-parametric network data model.

All electrical elements store frequency-independent primitives (series
resistance R, series inductance L, shunt capacitance C or inductance L_sh)
and admittances are computed on demand at a supplied angular frequency.
Per-unit convention throughout: impedances in pu, inductances/capacitances
in pu*s (reactance/susceptance at omega = 1 rad/s), frequencies in rad/s
internally (Hz only at I/O boundaries).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

DEFAULT_ANGLE_LIMIT = math.radians(30.0)
UNLIMITED_RATING = 99.99  # pu placeholder used when a case declares rating 0


# ---------------------------------------------------------------------------
# Frequency specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedFrequency:
    """Constant-frequency subnetwork, omega in rad/s."""
    omega: float


@dataclass(frozen=True)
class VariableFrequency:
    """Variable-frequency subnetwork with allowable range [omega_min, omega_max]."""
    omega_min: float
    omega_max: float


# ---------------------------------------------------------------------------
# Shunt elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CapacitiveShunt:
    """Bus shunt capacitor; susceptance omega * C."""
    c: float  # pu*s


@dataclass(frozen=True)
class ReactiveShunt:
    """Bus shunt reactor; susceptance -1 / (omega * L)."""
    l: float  # pu*s


# ---------------------------------------------------------------------------
# Branch kinds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AcLine:
    pass


@dataclass(frozen=True)
class Transformer:
    pass


@dataclass(frozen=True)
class HvdcLine:
    """DC-operated branch.

    k_cond: conductor-utilization factor (2/3 for a bipole on a single
    three-conductor circuit, 1 when all conductors are used).
    k_ins: insulation voltage factor (1 to keep rms voltage, sqrt(2) to go
    to the former peak voltage).
    """
    k_cond: float = 2.0 / 3.0
    k_ins: float = 1.0


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bus:
    id: int
    v_min: float = 0.9
    v_max: float = 1.1
    g_sh: float = 0.0               # frequency-independent shunt conductance, pu
    shunt: CapacitiveShunt | ReactiveShunt | None = None
    p_load: float = 0.0             # pu
    q_load: float = 0.0             # pu


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    r: float                        # series resistance, pu
    l: float                        # series inductance, pu*s (X at omega=1)
    g_sh: float = 0.0               # total shunt conductance, split per end
    c: float = 0.0                  # total shunt capacitance, pu*s, split per end
    tap: float = 1.0
    shift: float = 0.0              # rad
    s_max: float = UNLIMITED_RATING  # pu apparent power per end
    theta_max: float = DEFAULT_ANGLE_LIMIT  # rad
    kind: AcLine | Transformer | HvdcLine = field(default_factory=AcLine)
    in_service: bool = True

    @property
    def is_dc(self) -> bool:
        return isinstance(self.kind, HvdcLine)


@dataclass(frozen=True)
class PolynomialCost:
    """c0 + c1*p + c2*p**2 with p in pu."""
    c0: float = 0.0
    c1: float = 0.0
    c2: float = 0.0

    def __call__(self, p: float) -> float:
        return self.c0 + self.c1 * p + self.c2 * p * p

    def derivative(self, p: float) -> float:
        return self.c1 + 2.0 * self.c2 * p


@dataclass(frozen=True)
class PiecewiseLinearCost:
    """Convex piecewise-linear cost given as ((p0, c0), (p1, c1), ...)."""
    points: tuple[tuple[float, float], ...]

    def segments(self):
        """Yield (slope, intercept) of each linear piece."""
        pts = self.points
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            m = (y1 - y0) / (x1 - x0)
            yield m, y0 - m * x0

    def __call__(self, p: float) -> float:
        # Value of the convex envelope: max over segment lines, which matches
        # linear interpolation inside the breakpoint range.
        return max(m * p + b for m, b in self.segments())


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    cost: PolynomialCost | PiecewiseLinearCost = field(default_factory=PolynomialCost)
    in_service: bool = True


@dataclass(frozen=True)
class Subnetwork:
    id: str
    frequency: FixedFrequency | VariableFrequency
    bus_ids: frozenset[int]
    branch_ids: frozenset[int]
    generator_ids: frozenset[int]
    reference_bus: int

    @property
    def is_variable(self) -> bool:
        return isinstance(self.frequency, VariableFrequency)


@dataclass(frozen=True)
class MultiFrequencyNetwork:
    """A grid partitioned into subnetworks joined by converter interfaces.

    Buses, branches and generators keep ingest order; subnetworks and
    interfaces keep declaration order. All members are immutable, so a
    network can be shared freely across threads and solver instances.
    """
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    subnetworks: tuple[Subnetwork, ...]
    interfaces: tuple = ()           # ConverterInterface, see lfopf.converter
    base_mva: float = 100.0
    omega_base: float = 2.0 * math.pi * 50.0

    def bus(self, bus_id: int) -> Bus:
        return self._bus_index[bus_id]

    def branch(self, branch_id: int) -> Branch:
        return self._branch_index[branch_id]

    def generator(self, gen_id: int) -> Generator:
        return self._gen_index[gen_id]

    def subnetwork(self, subnet_id: str) -> Subnetwork:
        return self._subnet_index[subnet_id]

    def subnetwork_of_bus(self, bus_id: int) -> Subnetwork:
        return self._bus_subnet[bus_id]

    def __post_init__(self):
        object.__setattr__(self, "_bus_index", {b.id: b for b in self.buses})
        object.__setattr__(self, "_branch_index", {b.id: b for b in self.branches})
        object.__setattr__(self, "_gen_index", {g.id: g for g in self.generators})
        object.__setattr__(self, "_subnet_index", {s.id: s for s in self.subnetworks})
        bus_subnet: dict[int, Subnetwork] = {}
        for s in self.subnetworks:
            for b in s.bus_ids:
                bus_subnet[b] = s
        object.__setattr__(self, "_bus_subnet", bus_subnet)


# ---------------------------------------------------------------------------
# Admittance evaluation
# ---------------------------------------------------------------------------

def series_admittance(r: float, l: float, omega: float) -> tuple[float, float]:
    """Series conductance and susceptance of an R-L branch at omega.

    G = R / (R^2 + (omega L)^2),  B = -omega L / (R^2 + (omega L)^2).
    A branch with R = L = 0 is structurally degenerate and is rejected by
    validate_network; here it would divide by zero.
    """
    x = omega * l
    d = r * r + x * x
    return r / d, -x / d


def series_admittance_domega(r: float, l: float, omega: float) -> tuple[float, float]:
    """d/d omega of (G, B) from series_admittance."""
    x = omega * l
    d = r * r + x * x
    dg = -2.0 * omega * l * l * r / (d * d)
    db = -l * (r * r - x * x) / (d * d)
    return dg, db


def shunt_susceptance(element: CapacitiveShunt | ReactiveShunt | None, omega: float) -> float:
    """Susceptance of a bus shunt element at omega (0.0 for no element).

    Capacitive shunts scale linearly with frequency, reactive (inductive)
    shunts inversely; the shunt conductance is frequency-independent and is
    not handled here.
    """
    if element is None:
        return 0.0
    if isinstance(element, CapacitiveShunt):
        return omega * element.c
    if omega <= 0.0:
        raise ValueError("inductive shunt susceptance is singular at omega <= 0")
    return -1.0 / (omega * element.l)


def shunt_susceptance_domega(element: CapacitiveShunt | ReactiveShunt | None, omega: float) -> float:
    if element is None:
        return 0.0
    if isinstance(element, CapacitiveShunt):
        return element.c
    return 1.0 / (omega * omega * element.l)


# ---------------------------------------------------------------------------
# Structural validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    entity: str       # e.g. "branch 3", "subnetwork lf1"
    rule: str         # short machine-readable rule name
    message: str

    def __str__(self):
        return f"{self.entity}: {self.rule}: {self.message}"


def _check_bus(bus: Bus, out: list[Violation]):
    if not (0.0 < bus.v_min <= bus.v_max):
        out.append(Violation(f"bus {bus.id}", "voltage-bounds",
                             f"require 0 < v_min <= v_max, got [{bus.v_min}, {bus.v_max}]"))
    if not (math.isfinite(bus.p_load) and math.isfinite(bus.q_load)):
        out.append(Violation(f"bus {bus.id}", "load-finite", "load values must be finite"))


def _check_branch(br: Branch, out: list[Violation]):
    ent = f"branch {br.id}"
    if br.r < 0.0:
        out.append(Violation(ent, "resistance-sign", f"R must be >= 0, got {br.r}"))
    if br.l < 0.0:
        out.append(Violation(ent, "inductance-sign", f"L must be >= 0, got {br.l}"))
    if br.r == 0.0 and br.l == 0.0:
        out.append(Violation(ent, "degenerate-impedance", "series R and L are both zero"))
    if br.tap <= 0.0:
        out.append(Violation(ent, "tap-sign", f"tap ratio must be > 0, got {br.tap}"))
    if br.s_max <= 0.0:
        out.append(Violation(ent, "thermal-limit", f"s_max must be > 0, got {br.s_max}"))
    if not (0.0 < br.theta_max <= math.pi / 2.0):
        out.append(Violation(ent, "angle-limit",
                             f"theta_max must be in (0, pi/2], got {br.theta_max}"))
    if br.is_dc:
        if br.r <= 0.0:
            out.append(Violation(ent, "dc-resistance", "a DC branch needs R > 0"))
        if br.kind.k_cond <= 0.0 or br.kind.k_ins <= 0.0:
            out.append(Violation(ent, "dc-factors", "k_cond and k_ins must be positive"))


def _check_generator(g: Generator, out: list[Violation]):
    ent = f"generator {g.id}"
    if g.p_min > g.p_max:
        out.append(Violation(ent, "p-bounds", f"p_min {g.p_min} > p_max {g.p_max}"))
    if g.q_min > g.q_max:
        out.append(Violation(ent, "q-bounds", f"q_min {g.q_min} > q_max {g.q_max}"))
    if isinstance(g.cost, PiecewiseLinearCost):
        pts = g.cost.points
        if len(pts) < 2:
            out.append(Violation(ent, "pwl-points", "piecewise cost needs >= 2 breakpoints"))
            return
        xs = [p for p, _ in pts]
        if any(x1 <= x0 for x0, x1 in zip(xs, xs[1:])):
            out.append(Violation(ent, "pwl-order", "breakpoint abscissae must increase"))
            return
        slopes = [m for m, _ in g.cost.segments()]
        if any(m1 < m0 - 1e-12 for m0, m1 in zip(slopes, slopes[1:])):
            out.append(Violation(ent, "pwl-convexity", "piecewise cost must be convex"))


def _check_subnetwork(net: MultiFrequencyNetwork, sub: Subnetwork, out: list[Violation]):
    ent = f"subnetwork {sub.id}"
    if isinstance(sub.frequency, VariableFrequency):
        f = sub.frequency
        if not (0.0 < f.omega_min <= f.omega_max):
            out.append(Violation(ent, "frequency-range",
                                 f"require 0 < omega_min <= omega_max, got [{f.omega_min}, {f.omega_max}]"))
    else:
        if sub.frequency.omega < 0.0:
            out.append(Violation(ent, "frequency-sign", "fixed omega must be >= 0"))
    for b in sorted(sub.bus_ids):
        if b not in net._bus_index:
            out.append(Violation(ent, "dangling-bus", f"member bus {b} does not exist"))
    for b in sorted(sub.branch_ids):
        if b not in net._branch_index:
            out.append(Violation(ent, "dangling-branch", f"member branch {b} does not exist"))
    for g in sorted(sub.generator_ids):
        if g not in net._gen_index:
            out.append(Violation(ent, "dangling-generator", f"member generator {g} does not exist"))
    if sub.reference_bus not in sub.bus_ids:
        out.append(Violation(ent, "reference-bus",
                             f"reference bus {sub.reference_bus} is not a member"))
    # Connectivity over in-service member branches: a disconnected piece has
    # no angle reference and makes the flow problem singular.
    members = sorted(sub.bus_ids)
    if len(members) > 1:
        parent = {b: b for b in members}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for bid in sorted(sub.branch_ids):
            br = net._branch_index.get(bid)
            if br is None or not br.in_service:
                continue
            if br.from_bus in parent and br.to_bus in parent:
                parent[find(br.from_bus)] = find(br.to_bus)
        roots = {find(b) for b in members}
        if len(roots) > 1:
            out.append(Violation(ent, "disconnected",
                                 f"member buses split into {len(roots)} components"))


def validate_network(net: MultiFrequencyNetwork) -> list[Violation]:
    """Collect all structural violations; empty list means well-formed.

    Pure and idempotent: violations are returned as data, never raised.
    """
    out: list[Violation] = []

    seen = set()
    for b in net.buses:
        if b.id in seen:
            out.append(Violation(f"bus {b.id}", "duplicate-id", "bus id declared twice"))
        seen.add(b.id)
        _check_bus(b, out)
    for br in net.branches:
        _check_branch(br, out)
        for end in (br.from_bus, br.to_bus):
            if end not in net._bus_index:
                out.append(Violation(f"branch {br.id}", "dangling-bus",
                                     f"endpoint bus {end} does not exist"))
    for g in net.generators:
        _check_generator(g, out)
        if g.bus not in net._bus_index:
            out.append(Violation(f"generator {g.id}", "dangling-bus",
                                 f"bus {g.bus} does not exist"))

    for sub in net.subnetworks:
        _check_subnetwork(net, sub, out)

    # Partition: every bus in exactly one subnetwork.
    counts = {b.id: 0 for b in net.buses}
    for sub in net.subnetworks:
        for b in sub.bus_ids:
            if b in counts:
                counts[b] += 1
    for bid, n in counts.items():
        if n == 0:
            out.append(Violation(f"bus {bid}", "unassigned", "bus belongs to no subnetwork"))
        elif n > 1:
            out.append(Violation(f"bus {bid}", "multi-assigned",
                                 f"bus belongs to {n} subnetworks"))

    # Branch endpoints must share a subnetwork, and the branch must be a
    # member of it; crossing subnetworks requires a converter interface.
    branch_owner: dict[int, str] = {}
    for sub in net.subnetworks:
        for bid in sub.branch_ids:
            if bid in branch_owner:
                out.append(Violation(f"branch {bid}", "multi-assigned",
                                     "branch claimed by two subnetworks"))
            branch_owner[bid] = sub.id
    for br in net.branches:
        sf = net._bus_subnet.get(br.from_bus)
        st = net._bus_subnet.get(br.to_bus)
        if sf is None or st is None:
            continue
        if sf.id != st.id:
            out.append(Violation(f"branch {br.id}", "cross-subnetwork",
                                 f"endpoints lie in subnetworks {sf.id} and {st.id} "
                                 "without a converter interface"))
        elif branch_owner.get(br.id) not in (None, sf.id):
            out.append(Violation(f"branch {br.id}", "wrong-owner",
                                 f"assigned to {branch_owner[br.id]} but endpoints are in {sf.id}"))
        elif br.id not in sf.branch_ids:
            out.append(Violation(f"branch {br.id}", "unassigned",
                                 f"not listed as a member of subnetwork {sf.id}"))

    for g in net.generators:
        sub = net._bus_subnet.get(g.bus)
        if sub is not None and g.id not in sub.generator_ids:
            out.append(Violation(f"generator {g.id}", "unassigned",
                                 f"not listed as a member of subnetwork {sub.id}"))

    # Interface checks live here because interfaces are part of the network;
    # the converter module owns the physics.
    for iface in net.interfaces:
        ent = f"interface {iface.id}"
        if not (0.0 < iface.modulation_index <= 1.0):
            out.append(Violation(ent, "modulation-index",
                                 f"M must be in (0, 1], got {iface.modulation_index}"))
        if any(c < 0.0 for c in iface.loss_coefficients):
            out.append(Violation(ent, "loss-coefficients", "coefficients must be >= 0"))
        subs = []
        for term in iface.terminals:
            if term.bus not in net._bus_index:
                out.append(Violation(ent, "dangling-bus",
                                     f"terminal bus {term.bus} does not exist"))
            else:
                subs.append(net._bus_subnet.get(term.bus))
        if len(subs) == 2 and None not in subs and subs[0].id == subs[1].id:
            out.append(Violation(ent, "same-subnetwork",
                                 f"both terminals lie in subnetwork {subs[0].id}"))

    return out

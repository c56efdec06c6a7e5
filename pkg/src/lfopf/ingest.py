"""Case-file ingestion.

Two inputs feed the engine: a Matpower-style matrix case file with the
standard bus/gen/branch/gencost tables, and an optional YAML extension
document (schema version 1) declaring subnetworks, converter interfaces,
bus splits, scenario overrides, HVDC corridor flags and the corridor
membership used for binding-regime classification.

Reactances and susceptances in the case file are given at the base
frequency; ingestion converts them once into inductances and capacitances
so that admittances can be re-evaluated at any operating frequency.
Frequencies appear in Hz in all files and are converted to rad/s here.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field

import yaml

from .converter import ConverterInterface, LossCoefficients, Terminal
from .network import (
    AcLine,
    Branch,
    Bus,
    CapacitiveShunt,
    FixedFrequency,
    Generator,
    HvdcLine,
    MultiFrequencyNetwork,
    PiecewiseLinearCost,
    PolynomialCost,
    ReactiveShunt,
    Subnetwork,
    Transformer,
    UNLIMITED_RATING,
    VariableFrequency,
)

log = logging.getLogger(__name__)

EXTENSION_SCHEMA_VERSION = 1


class ParseError(ValueError):
    """Malformed case text; the message names the offending line."""


class IngestError(ValueError):
    """Structurally impossible input (dangling references, bad schema)."""


# ---------------------------------------------------------------------------
# Case document (raw tables, case units: MW/MVAr/degrees)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BusRow:
    bus_i: int
    bus_type: int
    pd: float
    qd: float
    gs: float
    bs: float
    base_kv: float
    v_max: float
    v_min: float


@dataclass(frozen=True)
class GenRow:
    bus: int
    qmax: float
    qmin: float
    status: int
    pmax: float
    pmin: float


@dataclass(frozen=True)
class BranchRow:
    f_bus: int
    t_bus: int
    r: float
    x: float
    b: float
    rate_a: float
    tap: float
    shift: float
    status: int
    angmin: float
    angmax: float


@dataclass(frozen=True)
class CostRow:
    model: int
    ncost: int
    values: tuple[float, ...]


@dataclass(frozen=True)
class CaseDocument:
    name: str
    base_mva: float
    buses: tuple[BusRow, ...]
    generators: tuple[GenRow, ...]
    branches: tuple[BranchRow, ...]
    costs: tuple[CostRow, ...]


_ASSIGN_RE = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")


def _tokenize(line: str) -> list[str]:
    line = line.split("%", 1)[0]
    line = line.replace(";", " ").replace("]", " ").replace("[", " ")
    return line.split()


def parse_case(text: str) -> CaseDocument:
    """Parse a Matpower-style case file into raw tables.

    Comments (%) and blank lines are tolerated; a row with the wrong column
    count raises ParseError naming the line.
    """
    name = "case"
    base_mva = None
    tables: dict[str, list[tuple[int, list[float]]]] = {}
    current: str | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        if current is not None:
            row = _tokenize(line)
            if row:
                try:
                    tables[current].append((lineno, [float(t) for t in row]))
                except ValueError:
                    raise ParseError(f"line {lineno}: non-numeric value in mpc.{current}")
            if "]" in line:
                current = None
            continue
        if line.startswith("function"):
            parts = line.split("=")
            if len(parts) == 2:
                name = parts[1].strip().rstrip(";").strip()
            continue
        m = _ASSIGN_RE.match(line)
        if not m:
            continue
        key, rest = m.group(1), m.group(2).strip()
        if rest.startswith("["):
            tables[key] = []
            current = key
            body = rest[1:]
            row = _tokenize(body)
            if row:
                tables[key].append((lineno, [float(t) for t in row]))
            if "]" in body:
                current = None
        else:
            value = rest.rstrip(";").strip().strip("'\"")
            if key == "baseMVA":
                base_mva = float(value)

    if base_mva is None:
        raise ParseError("missing mpc.baseMVA")
    if "bus" not in tables or "branch" not in tables or "gen" not in tables:
        missing = [k for k in ("bus", "gen", "branch") if k not in tables]
        raise ParseError(f"missing table(s): {', '.join(missing)}")

    buses = []
    for lineno, row in tables["bus"]:
        if len(row) != 13:
            raise ParseError(f"line {lineno}: bus row has {len(row)} columns, expected 13")
        buses.append(BusRow(bus_i=int(row[0]), bus_type=int(row[1]), pd=row[2], qd=row[3],
                            gs=row[4], bs=row[5], base_kv=row[9],
                            v_max=row[11], v_min=row[12]))

    gens = []
    for lineno, row in tables["gen"]:
        if len(row) < 10:
            raise ParseError(f"line {lineno}: gen row has {len(row)} columns, expected >= 10")
        gens.append(GenRow(bus=int(row[0]), qmax=row[3], qmin=row[4],
                           status=int(row[7]), pmax=row[8], pmin=row[9]))

    branches = []
    for lineno, row in tables["branch"]:
        if len(row) != 13:
            raise ParseError(f"line {lineno}: branch row has {len(row)} columns, expected 13")
        branches.append(BranchRow(f_bus=int(row[0]), t_bus=int(row[1]), r=row[2], x=row[3],
                                  b=row[4], rate_a=row[5], tap=row[8], shift=row[9],
                                  status=int(row[10]), angmin=row[11], angmax=row[12]))

    costs = []
    for lineno, row in tables.get("gencost", []):
        if len(row) < 4:
            raise ParseError(f"line {lineno}: gencost row has {len(row)} columns, expected >= 4")
        model, ncost = int(row[0]), int(row[3])
        values = tuple(row[4:])
        need = 2 * ncost if model == 1 else ncost
        if len(values) != need:
            raise ParseError(f"line {lineno}: gencost row declares {ncost} cost values "
                             f"but carries {len(values)}")
        costs.append(CostRow(model=model, ncost=ncost, values=values))

    if costs and len(costs) != len(gens):
        raise IngestError(f"gencost table has {len(costs)} rows for {len(gens)} generators")

    return CaseDocument(name=name, base_mva=base_mva, buses=tuple(buses),
                        generators=tuple(gens), branches=tuple(branches), costs=tuple(costs))


# ---------------------------------------------------------------------------
# Base-frequency data -> frequency-independent primitives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BranchPrimitives:
    r: float
    l: float      # x / omega_base
    c: float      # total charging b / omega_base
    g_sh: float


@dataclass(frozen=True)
class BusShuntPrimitives:
    g_sh: float
    element: CapacitiveShunt | ReactiveShunt | None


def derive_primitives(case: CaseDocument, omega_base: float
                      ) -> tuple[dict[int, BranchPrimitives], dict[int, BusShuntPrimitives]]:
    """Convert base-frequency reactances/susceptances to L and C.

    Branch primitives are keyed by 1-based branch table position, bus shunt
    primitives by bus id. Resistances and shunt conductances pass through
    unchanged (frequency-independent).
    """
    if omega_base <= 0.0:
        raise IngestError(f"base frequency must be positive, got {omega_base} rad/s")
    base = case.base_mva
    branch_prims: dict[int, BranchPrimitives] = {}
    for idx, row in enumerate(case.branches, start=1):
        branch_prims[idx] = BranchPrimitives(
            r=row.r, l=row.x / omega_base, c=row.b / omega_base, g_sh=0.0)
    bus_prims: dict[int, BusShuntPrimitives] = {}
    for row in case.buses:
        b_pu = row.bs / base
        if b_pu > 0.0:
            element = CapacitiveShunt(c=b_pu / omega_base)
        elif b_pu < 0.0:
            element = ReactiveShunt(l=-1.0 / (omega_base * b_pu))
        else:
            element = None
        bus_prims[row.bus_i] = BusShuntPrimitives(g_sh=row.gs / base, element=element)
    return branch_prims, bus_prims


def _cost_from_row(row: CostRow | None, base: float):
    if row is None:
        return PolynomialCost()
    if row.model == 2:
        if row.ncost > 3:
            raise IngestError(f"polynomial cost of degree {row.ncost - 1} not supported "
                              "(maximum degree is 2)")
        coeffs = list(row.values)  # highest order first
        c = [0.0, 0.0, 0.0]
        for k, v in enumerate(reversed(coeffs)):
            c[k] = v * base ** k
        return PolynomialCost(c0=c[0], c1=c[1], c2=c[2])
    if row.model == 1:
        pts = []
        vals = row.values
        for k in range(row.ncost):
            pts.append((vals[2 * k] / base, vals[2 * k + 1]))
        return PiecewiseLinearCost(points=tuple(pts))
    raise IngestError(f"unsupported cost model code {row.model}")


def _angle_limit(row: BranchRow, idx: int) -> float:
    """Symmetric angle-difference limit in radians; 30 degrees when the case
    carries none (Matpower uses 0 or +-360 for 'unconstrained')."""
    amax = row.angmax
    if amax <= 0.0 or amax >= 90.0:
        return math.radians(30.0)
    if row.angmin != -amax:
        log.warning("branch %d: asymmetric angle limits [%g, %g], using +-%g deg",
                    idx, row.angmin, amax, amax)
    return math.radians(amax)


# ---------------------------------------------------------------------------
# Extension document
# ---------------------------------------------------------------------------

def _hz(value: float) -> float:
    return 2.0 * math.pi * float(value)


@dataclass(frozen=True)
class SubnetworkDecl:
    id: str
    frequency: FixedFrequency | VariableFrequency
    branches: tuple[int, ...]
    reference_bus: int | None = None


@dataclass(frozen=True)
class FilterDecl:
    port_bus: int
    r: float
    x: float
    b: float = 0.0
    rating: float = UNLIMITED_RATING   # pu


@dataclass(frozen=True)
class TerminalDecl:
    bus: int
    v_max_conv: float = math.inf
    i_arm_rms_max: float = math.inf
    p_min: float = -math.inf
    p_max: float = math.inf
    q_min: float = -math.inf
    q_max: float = math.inf
    v_min: float | None = None     # port-bus voltage bounds (lfac side)
    v_max: float | None = None
    filter: FilterDecl | None = None


@dataclass(frozen=True)
class InterfaceDecl:
    id: str
    subnetwork: str
    grid: TerminalDecl
    lfac: TerminalDecl
    modulation_index: float = 0.9
    losses_enabled: bool = True
    loss_coefficients: LossCoefficients = field(default_factory=LossCoefficients)


@dataclass(frozen=True)
class SplitDecl:
    bus: int
    new_bus: int
    subnetwork: str
    load_fraction: float = 0.0
    shunt_fraction: float = 0.0


@dataclass(frozen=True)
class GenScale:
    gen: int
    factor: float


@dataclass(frozen=True)
class Scenario:
    branch_outages: tuple[int, ...] = ()
    generator_outages: tuple[int, ...] = ()
    load_scale: float = 1.0
    gen_pmax_scale: tuple[GenScale, ...] = ()


@dataclass(frozen=True)
class HvdcDecl:
    branches: tuple[int, ...]
    k_cond: float = 2.0 / 3.0
    k_ins: float = 1.0


@dataclass(frozen=True)
class CorridorDecl:
    branches: tuple[int, ...] = ()
    buses: tuple[int, ...] = ()


@dataclass(frozen=True)
class ExtensionDocument:
    base_frequency_hz: float = 50.0
    subnetworks: tuple[SubnetworkDecl, ...] = ()
    interfaces: tuple[InterfaceDecl, ...] = ()
    splits: tuple[SplitDecl, ...] = ()
    scenario: Scenario = field(default_factory=Scenario)
    hvdc: tuple[HvdcDecl, ...] = ()
    corridor: CorridorDecl = field(default_factory=CorridorDecl)


def _freq_spec(d: dict) -> FixedFrequency | VariableFrequency:
    kind = d.get("type")
    if kind == "fixed":
        return FixedFrequency(omega=_hz(d["hz"]))
    if kind == "variable":
        return VariableFrequency(omega_min=_hz(d["min_hz"]), omega_max=_hz(d["max_hz"]))
    raise IngestError(f"frequency spec type must be 'fixed' or 'variable', got {kind!r}")


def _terminal_decl(d: dict) -> TerminalDecl:
    filt = None
    if d.get("filter"):
        f = d["filter"]
        filt = FilterDecl(port_bus=int(f["port_bus"]), r=float(f.get("r", 0.0)),
                          x=float(f["x"]), b=float(f.get("b", 0.0)),
                          rating=float(f.get("rating", UNLIMITED_RATING)))
    pb = d.get("p_bounds")
    qb = d.get("q_bounds")
    return TerminalDecl(
        bus=int(d["bus"]),
        v_max_conv=float(d.get("v_max_conv", math.inf)),
        i_arm_rms_max=float(d.get("i_arm_rms_max", math.inf)),
        p_min=float(pb[0]) if pb else -math.inf,
        p_max=float(pb[1]) if pb else math.inf,
        q_min=float(qb[0]) if qb else -math.inf,
        q_max=float(qb[1]) if qb else math.inf,
        v_min=float(d["v_min"]) if "v_min" in d else None,
        v_max=float(d["v_max"]) if "v_max" in d else None,
        filter=filt,
    )


def parse_extension(text: str) -> ExtensionDocument:
    """Parse and schema-check the YAML extension document."""
    doc = yaml.safe_load(text)
    if doc is None:
        return ExtensionDocument()
    if not isinstance(doc, dict):
        raise IngestError("extension document must be a mapping")
    version = doc.get("version")
    if version != EXTENSION_SCHEMA_VERSION:
        raise IngestError(f"unsupported extension schema version {version!r} "
                          f"(supported: {EXTENSION_SCHEMA_VERSION})")

    subnets = []
    for d in doc.get("subnetworks", []) or []:
        subnets.append(SubnetworkDecl(
            id=str(d["id"]),
            frequency=_freq_spec(d["frequency"]),
            branches=tuple(int(b) for b in d.get("branches", [])),
            reference_bus=int(d["reference_bus"]) if "reference_bus" in d else None,
        ))

    interfaces = []
    for d in doc.get("interfaces", []) or []:
        lc = d.get("loss_coefficients") or {}
        interfaces.append(InterfaceDecl(
            id=str(d["id"]),
            subnetwork=str(d["lfac_terminal"]["subnetwork"]),
            grid=_terminal_decl(d["grid_terminal"]),
            lfac=_terminal_decl(d["lfac_terminal"]),
            modulation_index=float(d.get("modulation_index", 0.9)),
            losses_enabled=bool(d.get("losses_enabled", True)),
            loss_coefficients=LossCoefficients(
                c1=float(lc.get("c1", 0.0)), c2=float(lc.get("c2", 0.0)),
                c3=float(lc.get("c3", 0.0)), s1=float(lc.get("s1", 0.0)),
                s2=float(lc.get("s2", 0.0)), s3=float(lc.get("s3", 0.0))),
        ))

    splits = []
    for d in doc.get("splits", []) or []:
        splits.append(SplitDecl(
            bus=int(d["bus"]), new_bus=int(d["new_bus"]), subnetwork=str(d["subnetwork"]),
            load_fraction=float(d.get("load_fraction", 0.0)),
            shunt_fraction=float(d.get("shunt_fraction", 0.0))))

    sc = doc.get("scenario") or {}
    scenario = Scenario(
        branch_outages=tuple(int(b) for b in sc.get("branch_outages", []) or []),
        generator_outages=tuple(int(g) for g in sc.get("generator_outages", []) or []),
        load_scale=float(sc.get("load_scale", 1.0)),
        gen_pmax_scale=tuple(GenScale(gen=int(d["gen"]), factor=float(d["factor"]))
                             for d in sc.get("gen_pmax_scale", []) or []),
    )

    hvdc = tuple(HvdcDecl(branches=tuple(int(b) for b in d["branches"]),
                          k_cond=float(d.get("k_cond", 2.0 / 3.0)),
                          k_ins=float(d.get("k_ins", 1.0)))
                 for d in doc.get("hvdc", []) or [])

    cd = doc.get("corridor") or {}
    corridor = CorridorDecl(branches=tuple(int(b) for b in cd.get("branches", []) or []),
                            buses=tuple(int(b) for b in cd.get("buses", []) or []))

    return ExtensionDocument(
        base_frequency_hz=float(doc.get("base_frequency_hz", 50.0)),
        subnetworks=tuple(subnets), interfaces=tuple(interfaces), splits=tuple(splits),
        scenario=scenario, hvdc=hvdc, corridor=corridor)


# ---------------------------------------------------------------------------
# Merge: case + extension -> MultiFrequencyNetwork
# ---------------------------------------------------------------------------

MAIN_SUBNET = "main"


@dataclass
class _WorkBranch:
    id: int
    f_bus: int
    t_bus: int
    prim: BranchPrimitives
    s_max: float
    tap: float
    shift: float
    theta_max: float
    in_service: bool
    is_transformer: bool
    kind: AcLine | Transformer | HvdcLine | None = None


def merge(case: CaseDocument, ext: ExtensionDocument | None = None) -> MultiFrequencyNetwork:
    """Assemble the multi-frequency network.

    Order of operations: scenario overrides, bus splits, interface port
    creation with branch re-termination, subnetwork assignment, HVDC
    flagging. With an empty extension the result is a single
    fixed-frequency subnetwork at the base frequency.
    """
    ext = ext or ExtensionDocument()
    omega_base = _hz(ext.base_frequency_hz)
    base = case.base_mva
    branch_prims, bus_prims = derive_primitives(case, omega_base)

    # Mutable working copies -------------------------------------------------
    buses: dict[int, dict] = {}
    for row in case.buses:
        prim = bus_prims[row.bus_i]
        buses[row.bus_i] = dict(
            id=row.bus_i, v_min=row.v_min, v_max=row.v_max,
            g_sh=prim.g_sh, shunt=prim.element,
            p_load=row.pd / base, q_load=row.qd / base,
            bus_type=row.bus_type,
        )

    outages = set(ext.scenario.branch_outages)
    branches: dict[int, _WorkBranch] = {}
    for idx, row in enumerate(case.branches, start=1):
        if idx in outages:
            continue
        rate = row.rate_a / base
        if row.rate_a == 0.0:
            rate = UNLIMITED_RATING
            log.warning("branch %d: rating 0 treated as unlimited (%g pu)", idx, rate)
        branches[idx] = _WorkBranch(
            id=idx, f_bus=row.f_bus, t_bus=row.t_bus, prim=branch_prims[idx],
            s_max=rate, tap=row.tap if row.tap != 0.0 else 1.0,
            shift=math.radians(row.shift), theta_max=_angle_limit(row, idx),
            in_service=row.status != 0, is_transformer=(row.tap not in (0.0, 1.0)))
    missing = sorted(b for b in outages if not 1 <= b <= len(case.branches))
    if missing:
        raise IngestError(f"scenario branch outage references unknown branch(es) {missing}")

    gen_outages = set(ext.scenario.generator_outages)
    pmax_scale = {g.gen: g.factor for g in ext.scenario.gen_pmax_scale}
    gens: dict[int, dict] = {}
    for idx, row in enumerate(case.generators, start=1):
        if idx in gen_outages:
            continue
        cost_row = case.costs[idx - 1] if case.costs else None
        gens[idx] = dict(
            id=idx, bus=row.bus, p_min=row.pmin / base,
            p_max=row.pmax * pmax_scale.get(idx, 1.0) / base,
            q_min=row.qmin / base, q_max=row.qmax / base,
            cost=_cost_from_row(cost_row, base), in_service=row.status != 0)
    missing = sorted(g for g in gen_outages if not 1 <= g <= len(case.generators))
    if missing:
        raise IngestError(f"scenario generator outage references unknown generator(s) {missing}")

    if ext.scenario.load_scale != 1.0:
        for b in buses.values():
            b["p_load"] *= ext.scenario.load_scale
            b["q_load"] *= ext.scenario.load_scale

    subnet_branches = {d.id: set(d.branches) for d in ext.subnetworks}
    declared_for_branch: dict[int, str] = {}
    for d in ext.subnetworks:
        for bid in d.branches:
            if bid in declared_for_branch:
                raise IngestError(f"branch {bid} declared in two subnetworks")
            if bid not in branches and bid not in outages:
                raise IngestError(f"subnetwork {d.id} references unknown branch {bid}")
            declared_for_branch[bid] = d.id

    # Bus splits --------------------------------------------------------------
    for sp in ext.splits:
        if sp.bus not in buses:
            raise IngestError(f"split references unknown bus {sp.bus}")
        if sp.new_bus in buses:
            raise IngestError(f"split bus id {sp.new_bus} already exists")
        if sp.subnetwork not in subnet_branches:
            raise IngestError(f"split references unknown subnetwork {sp.subnetwork}")
        orig = buses[sp.bus]
        lf, sf = sp.load_fraction, sp.shunt_fraction
        shunt = orig["shunt"]
        new_shunt = None
        if shunt is not None and sf > 0.0:
            if isinstance(shunt, CapacitiveShunt):
                new_shunt = CapacitiveShunt(c=shunt.c * sf)
                orig["shunt"] = CapacitiveShunt(c=shunt.c * (1.0 - sf))
            else:
                # series split of an inductor: susceptance shares sf / (1-sf)
                new_shunt = ReactiveShunt(l=shunt.l / sf)
                orig["shunt"] = ReactiveShunt(l=shunt.l / (1.0 - sf))
        buses[sp.new_bus] = dict(
            id=sp.new_bus, v_min=orig["v_min"], v_max=orig["v_max"],
            g_sh=orig["g_sh"] * sf, shunt=new_shunt,
            p_load=orig["p_load"] * lf, q_load=orig["q_load"] * lf,
            bus_type=1)
        orig["g_sh"] *= (1.0 - sf)
        orig["p_load"] *= (1.0 - lf)
        orig["q_load"] *= (1.0 - lf)
        moved = 0
        for br in branches.values():
            if br.id in subnet_branches[sp.subnetwork]:
                if br.f_bus == sp.bus:
                    br.f_bus = sp.new_bus
                    moved += 1
                if br.t_bus == sp.bus:
                    br.t_bus = sp.new_bus
                    moved += 1
        if moved == 0:
            raise IngestError(f"split of bus {sp.bus}: no member branch of "
                              f"{sp.subnetwork} is incident, assignment is ambiguous")

    # Interfaces: create port buses, re-terminate member branches -------------
    next_branch_id = (max(branches) if branches else len(case.branches)) + 1
    interfaces: list[ConverterInterface] = []
    extra_subnet_branches: dict[str, set[int]] = {d.id: set() for d in ext.subnetworks}
    grid_filter_buses: list[int] = []

    def _add_filter(term: TerminalDecl, at_bus: int, subnet_hint: str | None):
        """Create the port bus and pi branch of a filtered terminal; returns
        the port bus id. The filter branch is owned by the adjacent
        subnetwork (same side as at_bus)."""
        nonlocal next_branch_id
        f = term.filter
        if f.port_bus in buses:
            raise IngestError(f"filter port bus id {f.port_bus} already exists")
        parent = buses[at_bus]
        buses[f.port_bus] = dict(
            id=f.port_bus, v_min=term.v_min if term.v_min is not None else parent["v_min"],
            v_max=term.v_max if term.v_max is not None else parent["v_max"],
            g_sh=0.0, shunt=None, p_load=0.0, q_load=0.0, bus_type=1)
        branches[next_branch_id] = _WorkBranch(
            id=next_branch_id, f_bus=at_bus, t_bus=f.port_bus,
            prim=BranchPrimitives(r=f.r, l=f.x / omega_base, c=f.b / omega_base, g_sh=0.0),
            s_max=f.rating, tap=1.0, shift=0.0, theta_max=math.pi / 2.0,
            in_service=True, is_transformer=False)
        if subnet_hint is not None:
            extra_subnet_branches[subnet_hint].add(next_branch_id)
        bid = next_branch_id
        next_branch_id += 1
        return f.port_bus, bid

    for d in ext.interfaces:
        if d.subnetwork not in subnet_branches:
            raise IngestError(f"interface {d.id} references unknown subnetwork {d.subnetwork}")
        if d.grid.bus not in buses:
            raise IngestError(f"interface {d.id} references unknown bus {d.grid.bus}")
        if d.lfac.bus in buses:
            raise IngestError(f"interface {d.id}: port bus id {d.lfac.bus} already exists")

        grid_bus = d.grid.bus
        parent = buses[grid_bus]
        buses[d.lfac.bus] = dict(
            id=d.lfac.bus,
            v_min=d.lfac.v_min if d.lfac.v_min is not None else parent["v_min"],
            v_max=d.lfac.v_max if d.lfac.v_max is not None else parent["v_max"],
            g_sh=0.0, shunt=None, p_load=0.0, q_load=0.0, bus_type=1)

        # member branches touching the grid bus move over to the port bus
        moved = 0
        for br in branches.values():
            if br.id in subnet_branches[d.subnetwork]:
                if br.f_bus == grid_bus:
                    br.f_bus = d.lfac.bus
                    moved += 1
                if br.t_bus == grid_bus:
                    br.t_bus = d.lfac.bus
                    moved += 1
        if moved == 0:
            raise IngestError(f"interface {d.id}: no member branch of {d.subnetwork} "
                              f"is incident to bus {grid_bus}")

        grid_term_bus = grid_bus
        grid_filter_id = None
        if d.grid.filter is not None:
            grid_term_bus, grid_filter_id = _add_filter(d.grid, grid_bus, None)
            grid_filter_buses.append(grid_term_bus)
        lfac_term_bus = d.lfac.bus
        lfac_filter_id = None
        if d.lfac.filter is not None:
            lfac_term_bus, lfac_filter_id = _add_filter(d.lfac, d.lfac.bus, d.subnetwork)

        interfaces.append(ConverterInterface(
            id=d.id,
            terminals=(
                Terminal(bus=grid_term_bus, subnetwork=MAIN_SUBNET,
                         v_max_conv=d.grid.v_max_conv, i_arm_rms_max=d.grid.i_arm_rms_max,
                         p_min=d.grid.p_min, p_max=d.grid.p_max,
                         q_min=d.grid.q_min, q_max=d.grid.q_max,
                         filter_branch=grid_filter_id),
                Terminal(bus=lfac_term_bus, subnetwork=d.subnetwork,
                         v_max_conv=d.lfac.v_max_conv, i_arm_rms_max=d.lfac.i_arm_rms_max,
                         p_min=d.lfac.p_min, p_max=d.lfac.p_max,
                         q_min=d.lfac.q_min, q_max=d.lfac.q_max,
                         filter_branch=lfac_filter_id),
            ),
            modulation_index=d.modulation_index,
            losses_enabled=d.losses_enabled,
            loss_coefficients=d.loss_coefficients))

    # HVDC flags ---------------------------------------------------------------
    hvdc_kind: dict[int, HvdcLine] = {}
    for d in ext.hvdc:
        for bid in d.branches:
            if bid not in branches:
                raise IngestError(f"hvdc declaration references unknown branch {bid}")
            hvdc_kind[bid] = HvdcLine(k_cond=d.k_cond, k_ins=d.k_ins)

    # Subnetwork assignment ----------------------------------------------------
    declared_buses: dict[str, set[int]] = {d.id: set() for d in ext.subnetworks}
    for d in ext.subnetworks:
        member = subnet_branches[d.id] | extra_subnet_branches[d.id]
        for br in branches.values():
            if br.id in member:
                declared_buses[d.id].add(br.f_bus)
                declared_buses[d.id].add(br.t_bus)

    bus_owner: dict[int, str] = {}
    for d in ext.subnetworks:
        for b in declared_buses[d.id]:
            if b in bus_owner:
                raise IngestError(f"bus {b} would belong to subnetworks "
                                  f"{bus_owner[b]} and {d.id}")
            bus_owner[b] = d.id
    # converter grid-side terminals must stay on the grid side
    for iface in interfaces:
        gb = iface.terminals[0].bus
        if bus_owner.get(gb) is not None:
            raise IngestError(f"interface {iface.id}: grid terminal bus {gb} was "
                              f"absorbed into subnetwork {bus_owner[gb]}")

    final_buses = tuple(Bus(id=b["id"], v_min=b["v_min"], v_max=b["v_max"], g_sh=b["g_sh"],
                            shunt=b["shunt"], p_load=b["p_load"], q_load=b["q_load"])
                        for b in (buses[k] for k in buses))

    final_branches = []
    for bid in sorted(branches):
        br = branches[bid]
        if bid in hvdc_kind:
            kind = hvdc_kind[bid]
        elif br.is_transformer:
            kind = Transformer()
        else:
            kind = AcLine()
        final_branches.append(Branch(
            id=br.id, from_bus=br.f_bus, to_bus=br.t_bus, r=br.prim.r, l=br.prim.l,
            g_sh=br.prim.g_sh, c=br.prim.c, tap=br.tap, shift=br.shift,
            s_max=br.s_max, theta_max=br.theta_max, kind=kind, in_service=br.in_service))

    final_gens = tuple(Generator(**g) for g in (gens[k] for k in sorted(gens)))

    subnets: list[Subnetwork] = []
    main_buses = {b["id"] for b in buses.values() if bus_owner.get(b["id"]) is None}
    main_branch_ids = {br.id for br in final_branches
                       if br.from_bus in main_buses and br.to_bus in main_buses}
    main_gen_ids = {g.id for g in final_gens if g.bus in main_buses}
    ref_candidates = [b["id"] for b in buses.values()
                      if b.get("bus_type") == 3 and b["id"] in main_buses]
    if not ref_candidates:
        ref_candidates = sorted(main_buses)
    if not ref_candidates:
        raise IngestError("main subnetwork has no buses")
    subnets.append(Subnetwork(
        id=MAIN_SUBNET, frequency=FixedFrequency(omega=omega_base),
        bus_ids=frozenset(main_buses), branch_ids=frozenset(main_branch_ids),
        generator_ids=frozenset(main_gen_ids), reference_bus=ref_candidates[0]))

    for d in ext.subnetworks:
        member_buses = declared_buses[d.id]
        if not member_buses:
            raise IngestError(f"subnetwork {d.id} has no buses (no in-service member branches)")
        member_branch_ids = subnet_branches[d.id] | extra_subnet_branches[d.id]
        member_branch_ids = {b for b in member_branch_ids if b in branches}
        gen_ids = {g.id for g in final_gens if g.bus in member_buses}
        ref = d.reference_bus if d.reference_bus is not None else min(member_buses)
        subnets.append(Subnetwork(
            id=d.id, frequency=d.frequency, bus_ids=frozenset(member_buses),
            branch_ids=frozenset(member_branch_ids), generator_ids=frozenset(gen_ids),
            reference_bus=ref))

    return MultiFrequencyNetwork(
        buses=final_buses, branches=tuple(final_branches), generators=final_gens,
        subnetworks=tuple(subnets), interfaces=tuple(interfaces),
        base_mva=case.base_mva, omega_base=omega_base)


# ---------------------------------------------------------------------------
# Canonical dump
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def dump_network(net: MultiFrequencyNetwork) -> str:
    """Deterministic text rendering of a network for diffing and golden tests."""
    lines = [f"base_mva {_fmt(net.base_mva)}", f"omega_base {_fmt(net.omega_base)}"]
    for b in sorted(net.buses, key=lambda b: b.id):
        shunt = "-"
        if isinstance(b.shunt, CapacitiveShunt):
            shunt = f"C:{_fmt(b.shunt.c)}"
        elif isinstance(b.shunt, ReactiveShunt):
            shunt = f"L:{_fmt(b.shunt.l)}"
        lines.append(f"bus {b.id} v[{_fmt(b.v_min)},{_fmt(b.v_max)}] "
                     f"load {_fmt(b.p_load)}+j{_fmt(b.q_load)} gsh {_fmt(b.g_sh)} shunt {shunt}")
    for br in sorted(net.branches, key=lambda b: b.id):
        kind = type(br.kind).__name__
        if br.is_dc:
            kind += f"(kc={_fmt(br.kind.k_cond)},ki={_fmt(br.kind.k_ins)})"
        lines.append(f"branch {br.id} {br.from_bus}->{br.to_bus} r {_fmt(br.r)} l {_fmt(br.l)} "
                     f"c {_fmt(br.c)} gsh {_fmt(br.g_sh)} tap {_fmt(br.tap)} shift {_fmt(br.shift)} "
                     f"smax {_fmt(br.s_max)} thmax {_fmt(br.theta_max)} {kind}"
                     f"{'' if br.in_service else ' OUT'}")
    for g in sorted(net.generators, key=lambda g: g.id):
        if isinstance(g.cost, PolynomialCost):
            cost = f"poly({_fmt(g.cost.c0)},{_fmt(g.cost.c1)},{_fmt(g.cost.c2)})"
        else:
            cost = "pwl(" + ";".join(f"{_fmt(x)},{_fmt(y)}" for x, y in g.cost.points) + ")"
        lines.append(f"gen {g.id} @bus {g.bus} p[{_fmt(g.p_min)},{_fmt(g.p_max)}] "
                     f"q[{_fmt(g.q_min)},{_fmt(g.q_max)}] cost {cost}"
                     f"{'' if g.in_service else ' OUT'}")
    for s in sorted(net.subnetworks, key=lambda s: s.id):
        if isinstance(s.frequency, FixedFrequency):
            freq = f"fixed {_fmt(s.frequency.omega)}"
        else:
            freq = f"variable [{_fmt(s.frequency.omega_min)},{_fmt(s.frequency.omega_max)}]"
        lines.append(f"subnetwork {s.id} {freq} ref {s.reference_bus} "
                     f"buses {sorted(s.bus_ids)} branches {sorted(s.branch_ids)} "
                     f"gens {sorted(s.generator_ids)}")
    for i in sorted(net.interfaces, key=lambda i: i.id):
        t0, t1 = i.terminals
        k = i.loss_coefficients
        lines.append(f"interface {i.id} {t0.bus}({t0.subnetwork})<->{t1.bus}({t1.subnetwork}) "
                     f"M {_fmt(i.modulation_index)} losses "
                     f"{'on' if i.losses_enabled else 'off'} "
                     f"k[{','.join(_fmt(c) for c in k)}]")
    return "\n".join(lines) + "\n"

"""Steady-state model of an MMC frequency-conversion interface.

The converter is a two-port element joining buses of two different
subnetworks. Each terminal injects active and reactive power into its bus;
active power is conserved across the interface up to conduction and
switching losses, while reactive power is independently controllable per
terminal. Losses are driven by three arm-current statistics of the
six-arm topology: the squared rms current, the mean absolute current and
the DC-link current.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

SQRT2 = math.sqrt(2.0)

# Perturbation used only by the smooth evaluators consumed by the NLP: the
# mean-absolute-current expression divides by sqrt(p^2 + q^2) and the DC
# current contains |p|, both singular/kinked at zero power. Radicands get
# +EPS_SMOOTH^2, which perturbs losses by O(EPS_SMOOTH).
EPS_SMOOTH = 1e-6


@dataclass(frozen=True)
class LossCoefficients:
    """Conduction (c1..c3) and switching (s1..s3) loss coefficients."""
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    s1: float = 0.0
    s2: float = 0.0
    s3: float = 0.0

    def __iter__(self):
        yield from (self.c1, self.c2, self.c3, self.s1, self.s2, self.s3)


@dataclass(frozen=True)
class Terminal:
    """One converter port: the bus it feeds plus its local limits."""
    bus: int
    subnetwork: str
    v_max_conv: float = math.inf      # max voltage magnitude at the port bus
    i_arm_rms_max: float = math.inf   # max rms arm current
    p_min: float = -math.inf          # optional explicit injection bounds
    p_max: float = math.inf
    q_min: float = -math.inf
    q_max: float = math.inf
    filter_branch: int | None = None  # id of the port's pi branch, if any


@dataclass(frozen=True)
class ConverterInterface:
    id: str
    terminals: tuple[Terminal, Terminal]
    modulation_index: float = 0.9
    loss_coefficients: LossCoefficients = field(default_factory=LossCoefficients)
    losses_enabled: bool = True


@dataclass(frozen=True)
class ArmCurrents:
    """Arm-current statistics at one converter terminal (all >= 0)."""
    i_rms_sq: float
    i_mabs: float
    i_dc: float


def arm_currents(p: float, q: float, v: float, m: float) -> ArmCurrents:
    """Exact arm-current statistics for terminal power (p, q) at voltage v.

    i_rms_sq = (M^2 p^2 + (p^2+q^2)/2) / (18 v^2)
    i_mabs   = 2 sqrt(2) / (3 v) * (M^2 p^2 / sqrt(p^2+q^2) + sqrt(q^2 + p^2 (1-M^2)))
    i_dc     = M |p| / (sqrt(2) v)

    The removable singularity of i_mabs at p = q = 0 takes its two-sided
    limit, 0.
    """
    if v <= 0.0:
        raise ValueError(f"terminal voltage must be positive, got {v}")
    s2 = p * p + q * q
    i_rms_sq = (m * m * p * p + s2 / 2.0) / (18.0 * v * v)
    i_dc = m * abs(p) / (SQRT2 * v)
    if s2 == 0.0:
        i_mabs = 0.0
    else:
        i_mabs = (2.0 * SQRT2 / (3.0 * v)) * (
            m * m * p * p / math.sqrt(s2) + math.sqrt(q * q + p * p * (1.0 - m * m))
        )
    return ArmCurrents(i_rms_sq=i_rms_sq, i_mabs=i_mabs, i_dc=i_dc)


def conduction_loss(ac: ArmCurrents, c1: float, c2: float, c3: float) -> float:
    """Total conduction loss over all six arms."""
    return 6.0 * (c1 * ac.i_rms_sq + c2 * ac.i_mabs + c3 * ac.i_dc)


def switching_loss(ac: ArmCurrents, s1: float, s2: float, s3: float) -> float:
    """Total switching loss over all six arms; the s3 term is a constant
    no-load loss, so the result is >= 6*s3."""
    return 6.0 * (s1 * ac.i_rms_sq + s2 * ac.i_mabs + s3)


def terminal_losses(iface: ConverterInterface, p: float, q: float, v: float) -> float:
    """Conduction + switching loss at one terminal; 0 when losses are disabled."""
    if not iface.losses_enabled:
        return 0.0
    k = iface.loss_coefficients
    ac = arm_currents(p, q, v, iface.modulation_index)
    return conduction_loss(ac, k.c1, k.c2, k.c3) + switching_loss(ac, k.s1, k.s2, k.s3)


def interface_power_residual(iface: ConverterInterface,
                             p_i: float, p_j: float,
                             losses_i: float, losses_j: float) -> float:
    """Active-power conservation residual p_i + p_j + losses; the OPF
    constrains this to zero. With losses disabled the loss terms are zero."""
    if not iface.losses_enabled:
        losses_i = 0.0
        losses_j = 0.0
    return p_i + p_j + losses_i + losses_j


def converter_limit_residuals(iface: ConverterInterface,
                              v: tuple[float, float],
                              ac: tuple[ArmCurrents, ArmCurrents]) -> list[float]:
    """Limit residuals (<= 0 when satisfied) for both terminals:
    V - v_max_conv and i_rms^2 - i_arm_rms_max^2. Unbounded limits
    (infinity) produce no residual."""
    out: list[float] = []
    for term, v_t, ac_t in zip(iface.terminals, v, ac):
        if math.isfinite(term.v_max_conv):
            out.append(v_t - term.v_max_conv)
        if math.isfinite(term.i_arm_rms_max):
            out.append(ac_t.i_rms_sq - term.i_arm_rms_max ** 2)
    return out


# ---------------------------------------------------------------------------
# Smooth evaluators for the NLP (values and partial derivatives)
# ---------------------------------------------------------------------------

def smooth_arm_rms_sq(p: float, q: float, v: float, m: float):
    """i_rms_sq and its partials w.r.t. (p, q, v). Already smooth."""
    a = m * m * p * p + (p * p + q * q) / 2.0
    inv = 1.0 / (18.0 * v * v)
    val = a * inv
    dp = (2.0 * m * m * p + p) * inv
    dq = q * inv
    dv = -2.0 * val / v
    return val, dp, dq, dv


def smooth_losses(p: float, q: float, v: float, m: float, k: LossCoefficients):
    """Smoothed terminal loss (conduction + switching) and partials.

    Matches terminal_losses up to O(EPS_SMOOTH): the radicals in the
    mean-absolute current and the |p| in the DC current are replaced by
    sqrt(. + EPS_SMOOTH^2) to keep first derivatives bounded for the
    interior-point solver.
    """
    e2 = EPS_SMOOTH * EPS_SMOOTH
    m2 = m * m

    i2, i2_p, i2_q, i2_v = smooth_arm_rms_sq(p, q, v, m)

    r = math.sqrt(p * p + q * q + e2)
    w = math.sqrt(q * q + p * p * (1.0 - m2) + e2)
    cma = 2.0 * SQRT2 / (3.0 * v)
    mabs = cma * (m2 * p * p / r + w)
    mabs_p = cma * (m2 * (2.0 * p / r - p ** 3 / r ** 3) + p * (1.0 - m2) / w)
    mabs_q = cma * (-m2 * p * p * q / r ** 3 + q / w)
    mabs_v = -mabs / v

    d = math.sqrt(p * p + e2)
    idc = m * d / (SQRT2 * v)
    idc_p = m * p / (SQRT2 * v * d)
    idc_v = -idc / v

    val = 6.0 * (k.c1 * i2 + k.c2 * mabs + k.c3 * idc
                 + k.s1 * i2 + k.s2 * mabs + k.s3)
    dp = 6.0 * ((k.c1 + k.s1) * i2_p + (k.c2 + k.s2) * mabs_p + k.c3 * idc_p)
    dq = 6.0 * ((k.c1 + k.s1) * i2_q + (k.c2 + k.s2) * mabs_q)
    dv = 6.0 * ((k.c1 + k.s1) * i2_v + (k.c2 + k.s2) * mabs_v + k.c3 * idc_v)
    return val, dp, dq, dv

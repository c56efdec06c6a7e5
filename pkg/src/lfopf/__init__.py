"""Multi-frequency optimal power flow engine.

Models electrical networks partitioned into subnetworks of differing
(possibly variable) AC frequency joined by modular multilevel converter
interfaces, assembles the resulting nonlinear cost-minimization problem
and solves it with a built-in primal-dual interior-point method. The
analysis layer reproduces frequency sweeps, control-mode and DC-conversion
comparisons, binding-constraint regime classification and local-minima
diagnostics.
"""

from .converter import (
    ArmCurrents,
    ConverterInterface,
    LossCoefficients,
    Terminal,
    arm_currents,
    conduction_loss,
    converter_limit_residuals,
    interface_power_residual,
    switching_loss,
)
from .formulation import (
    ControlMode,
    OpfProblem,
    OpfState,
    assemble,
    branch_flow,
    dispatch_cost,
    hvdc_flow,
    nodal_balance_residuals,
)
from .ingest import (
    CaseDocument,
    ExtensionDocument,
    derive_primitives,
    dump_network,
    merge,
    parse_case,
    parse_extension,
)
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
    VariableFrequency,
    series_admittance,
    shunt_susceptance,
    validate_network,
)
from .nlp import (
    AllStartsFailedError,
    NlpInstance,
    SolveResult,
    SolveStatus,
    SolverOptions,
    check_derivatives,
    multistart,
    solve,
    verify_kkt,
)

__version__ = "0.1.0"

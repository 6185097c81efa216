"""Min-cost flow by an interior point method whose electrical steps are found locally."""

from .errors import (BudgetExceeded, CentralityError, ContractViolation, DimensionError, ElectroflowError,
                     InfeasibleError, ParseError, ResourceError, RoundingError, SingularityError, WalkCapExceeded)
from .graph import (FlowInstance, RngStream, format_flow, incidence_apply, incidence_transpose_apply, make_instance,
                    parse_dimacs, read_dimacs, write_dimacs, write_flow)
from .ipm import (CentralState, SolveResult, StepParams, initialize_instance, min_cost_flow, multi_step,
                  newton_step, recenter, residual_norm, round_to_integral, trace_central_path)
from .oracle import brute_force_min_cost_flow, dense_electrical_step, ssp_min_cost_flow

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded", "CentralityError", "ContractViolation", "DimensionError", "ElectroflowError",
    "InfeasibleError", "ParseError", "ResourceError", "RoundingError", "SingularityError", "WalkCapExceeded",
    "FlowInstance", "RngStream", "format_flow", "incidence_apply", "incidence_transpose_apply", "make_instance",
    "parse_dimacs", "read_dimacs", "write_dimacs", "write_flow",
    "CentralState", "SolveResult", "StepParams", "initialize_instance", "min_cost_flow", "multi_step",
    "newton_step", "recenter", "residual_norm", "round_to_integral", "trace_central_path",
    "brute_force_min_cost_flow", "dense_electrical_step", "ssp_min_cost_flow",
]

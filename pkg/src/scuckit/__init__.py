"""scuckit: security-constrained unit commitment via a first-order LP
solver, logic-driven successive variable fixing, and transmission-filtered
branch and bound."""

from .driver import DriverConfig, RunReport, rel_gap, run, screen_violations, sgm10
from .fixing import (FixingConfig, RelaxedBinaries, confidence_round,
                     fixing_strategy, successive_fixing)
from .formulation import (MilpModel, ScalingInfo, VariableMap,
                          apply_instance_scaling, build_model, unscale_solution)
from .hprlp import (HprState, KktResidual, SolverConfig, SolveStatus,
                    hpr_iterate, kkt_residual, solve)
from .instance import (BASE_CASE, Generator, InstanceError, Network, PtdfTable,
                       ScucInstance, compute_ptdf, load_instance,
                       parse_instance, serialize_instance)
from .lp_kernel import (Precision, SparseMatrix, StandardFormLp, power_method,
                        project_box, project_nonneg)
from .milp_bb import BbConfig, Incumbent, MilpResult, solve_milp
from .mps import write_mps
from .presolve import (InfeasibleModelError, ReductionLog, lp_presolve,
                       milp_presolve, uncrush)

__version__ = "0.1.0"

"""Security-constrained economic dispatch with emergency-zone penalties."""

from .network import (Bus, Case, CaseError, CaseParseError, CaseValidationError,
                      Generator, Line, Load, RenewableSource, load_case,
                      scale_loads, synthetic_case, validate_case, write_case)
from .qp import (ConvexProgram, KktResiduals, SolverSolution, eq_duals_by_tag,
                 solve)
from .formulation import (CostBreakdown, Dispatch, EffectiveBounds, Observation,
                          ProgramBuilder, RampWindowError, VariableMap,
                          apply_line_caps, apply_ramping, build_base,
                          effective_bounds, extract_dispatch, observe,
                          operating_cost, period_base, shed_energy, strict_model)
from .dca import (DcaConfig, DcaIteration, DcaResult, dca_solve,
                  exact_cmp_objective, exact_zone_sets, g_h_split,
                  h_subgradient, phi, surrogate_objective)
from .horizon import (DispatchState, PeriodReport, SimulationError,
                      SimulationSummary, initial_state, simulate, update_tau,
                      write_lmp_csv, write_period_csv)
from .oracle import OracleBudgetError, OracleResult, oracle_solve

__version__ = "0.1.0"

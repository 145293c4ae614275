"""CRLB-driven antenna placement toolkit for collocated MIMO radar arrays."""

__version__ = "0.1.0"

from .errors import (AllRestartsFailed, CellGapError, DimensionMismatch,
                     GridTooCoarse, InfeasibleBounds, LineSearchFailure,
                     MaxIterations, NumericalFailure, OutOfCoverage,
                     ParseError, RecoveryInfeasible, SchemaError, SingularFim,
                     SingularRestriction, ToolkitError, ZeroRange)
from .fim import (FimReport, assemble_parameter_fim, bearing_variance,
                  numerical_fim_oracle, pair_coefficients, pair_fim_block,
                  parameter_crlb, state_fim_and_crlb, system_matrix)
from .mcsim import (EstimationResult, MlGrid, crlb_sweep, ml_estimate,
                    optimal_geometry, rmse_experiment, scale_to_snr,
                    ula_geometry)
from .placement import (MultistartResult, OptimizerTrace, SamplerConfig,
                        local_optimize, minimize_geometry,
                        omega_separation_interval, placement_cost,
                        random_feasible_geometry, sample_restart_optimize)
from .scenario import (ArrayGeometry, PlacementConstraints, RadarConfig,
                       Scenario, TargetParams, Violation,
                       cartesian_from_params, dump_scenario, load_scenario,
                       params_from_cartesian, scenario_to_dict,
                       target_from_cartesian, validate_scenario)
from .sdp import (PlacementSolution, SdpProblem, build_relaxation,
                  optimize_single_target, quadratic_cost, recover_geometry,
                  rotate_solution, solve_relaxation)
from .signal_model import (CovarianceModel, SteeringWorkspace, covariance,
                           log_likelihood, mean_response, omega_matrix,
                           restricted_covariance, sample_measurement,
                           steering_workspace)

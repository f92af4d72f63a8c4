"""diffgame: semi-Lagrangian solver and certification suite for
infinite-horizon N-player differential games on bounded boxes."""

from .certify import (CertificationReport, Deviation, DeviationFamilyConfig,
                      EpsilonNashReport, RateStudy, consistency_gap,
                      deviation_family, epsilon_nash_check, hjb_residual_lq,
                      rate_study)
from .continuous import (ContinuousPayoff, ContinuousTrajectory,
                         GronwallGapReport, GrowthBoundReport,
                         continuous_payoff, gronwall_gap_check,
                         growth_bound_check, integrate_closed_loop)
from .discretize import (DiscretePayoff, DiscreteTrajectory, TimeStep,
                         discrete_payoff, euler_step, make_timestep,
                         rollout_discrete, truncation_steps)
from .errors import (ConfigError, ConvergenceError, DiffGameError,
                     DivergenceError, GridMismatchError,
                     InnerConvergenceError, InvalidInputError,
                     InvalidStepError, OuterConvergenceError,
                     UnsupportedDomainError)
from .games import (GAME_BUILDERS, Box, GameDefinition, HypothesisData,
                    RateConditionMargins, build_game, constant_payoff, decay,
                    estimate_constants, eval_dynamics, eval_payoff,
                    lq_one_player, lq_symmetric, rate_condition_margin)
from .grids import (Grid, GridFunction, StrategyField, interpolate,
                    lipschitz_estimate, sup_diff)
from .kernels import backend_name, get_backend, set_threads
from .solver import (NashSolution, SolveDiagnostics, SolverConfig,
                     bellman_operator, bellman_residual, best_response_value,
                     solve_nash)

__version__ = "0.1.0"

__all__ = [
    "Box", "CertificationReport", "ConfigError", "ContinuousPayoff",
    "ContinuousTrajectory", "ConvergenceError", "Deviation",
    "DeviationFamilyConfig", "DiffGameError", "DiscretePayoff",
    "DiscreteTrajectory", "DivergenceError", "EpsilonNashReport",
    "GAME_BUILDERS", "GameDefinition", "Grid", "GridFunction",
    "GridMismatchError", "GronwallGapReport", "GrowthBoundReport",
    "HypothesisData", "InnerConvergenceError", "InvalidInputError",
    "InvalidStepError", "NashSolution", "OuterConvergenceError",
    "RateConditionMargins", "RateStudy", "SolveDiagnostics", "SolverConfig",
    "StrategyField", "TimeStep", "UnsupportedDomainError", "backend_name",
    "bellman_operator", "bellman_residual", "best_response_value",
    "build_game", "constant_payoff", "consistency_gap", "continuous_payoff",
    "decay", "deviation_family", "discrete_payoff", "epsilon_nash_check",
    "estimate_constants", "euler_step", "eval_dynamics", "eval_payoff",
    "get_backend", "gronwall_gap_check", "growth_bound_check",
    "hjb_residual_lq", "integrate_closed_loop", "interpolate",
    "lipschitz_estimate", "lq_one_player", "lq_symmetric", "make_timestep",
    "rate_condition_margin", "rate_study", "rollout_discrete", "set_threads",
    "solve_nash", "sup_diff", "truncation_steps",
]

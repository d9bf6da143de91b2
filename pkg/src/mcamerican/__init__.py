"""Monte Carlo pricing of American options by tracking the exercise boundary."""

from .boundary import (
    BinnedPoint,
    BoundaryPoint,
    ContinuationTable,
    Decision,
    ExerciseBoundary,
    Flag,
    ObjectiveCurve,
    early_cutoff_check,
    flashlight_augment,
    locate_binned_boundary,
    locate_boundary_mode_a,
    locate_boundary_mode_b,
    objective,
    objective_curve,
    policy_payoff,
)
from .contracts import AugmentedState, ContractSpec, discount_factor, exercise_payoff, payoff, update_average
from .errors import ParameterError, StabilityError
from .lattice import TreeConfig, black_scholes, critical_prices, crr_price, geo_asian_closed_form, geo_avg_tree
from .pricer import (
    PriceEstimate,
    evaluate_policy,
    price_american,
    price_american_on_sample,
    price_averaged,
    price_european,
    reprice_independent,
    track_boundary,
)
from .process import (
    PathSample,
    ProcessParams,
    TimeGrid,
    read_pathsample,
    sample_terminal_importance,
    simulate,
    simulate_bridge,
    simulate_forward,
    write_pathsample,
)
from .study import StudyConfig, approx_arith_price, objective_sweep, run_error_study, sample_random_options

__version__ = "0.1.0"

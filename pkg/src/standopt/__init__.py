"""Economic optimization of uneven-aged forest stand management.

The package couples a size-structured stand model with three optimization
layers: a continuous fitness evaluator for fixed harvesting schedules, a
genetic algorithm over variable-length schedule genotypes, and an exact
mixed-integer formulation solved by interval-partition branch and bound.
"""

__version__ = "0.1.0"

from .bnb import BnbLimits, BnbResult, run_bnb  # noqa: F401
from .config import (  # noqa: F401
    ModelConfig,
    base_case,
    config_fingerprint,
    config_from_dict,
    config_to_dict,
    load_config,
)
from .dynamics import (  # noqa: F401
    ConfigurationError,
    EconParams,
    GrowthParams,
    InfeasibilityError,
    SizeClassTable,
    simulate,
    stage_cash_flow,
    step,
    total_basal_area,
)
from .experiments import (  # noqa: F401
    best_fixed_interval,
    enumerate_exhaustive,
    export_trajectory,
    run_comparison,
    run_init_study,
    run_sensitivity,
)
from .fitness import (  # noqa: F401
    FitnessCache,
    FitnessResult,
    SolverOptions,
    evaluate_fitness,
)
from .ga import GaConfig, GaRunResult, run_ga  # noqa: F401
from .mip import RelaxResult, solve_relaxation  # noqa: F401
from .schedule import (  # noqa: F401
    ScheduleBounds,
    ScheduleGenotype,
    parse_schedule,
)
from .summary import SteadyStateSummary, extract_summary  # noqa: F401

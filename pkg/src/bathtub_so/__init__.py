"""Social-optimum departure times in a generalized bathtub traffic model."""

import os

# BLAS thread count has to be fixed before numpy loads
if "BATHTUB_THREADS" in os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["BATHTUB_THREADS"])

from .cost import CostField, class_costs, cost_field, ordering_violations, total_cost, trip_cost  # noqa: E402
from .dynamics import (BathtubState, SupplyConstraint, arrival_time, solve_dynamics,  # noqa: E402
                       solve_dynamics_with_supply)
from .gradient import gradient, objective, objective_and_gradient  # noqa: E402
from .model import (BathtubError, CostParams, DemandProfile, Grid, InitialState, SpeedFunction,  # noqa: E402
                    validate_scenario)
from .optimize import StepSchedule, initial_solution, optimize, stationarity_residual  # noqa: E402
from .projection import project  # noqa: E402
from .scenarios import Scenario, constant_speed, lyon_like, paris_scaled  # noqa: E402

__all__ = [
    "BathtubError", "BathtubState", "CostField", "CostParams", "DemandProfile", "Grid", "InitialState",
    "Scenario", "SpeedFunction", "StepSchedule", "SupplyConstraint", "arrival_time", "class_costs",
    "constant_speed", "cost_field", "gradient", "initial_solution", "lyon_like", "objective",
    "objective_and_gradient", "optimize", "ordering_violations", "paris_scaled", "project",
    "solve_dynamics", "solve_dynamics_with_supply", "stationarity_residual", "total_cost", "trip_cost",
    "validate_scenario",
]

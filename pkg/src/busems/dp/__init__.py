from .model import (CostBreakdown, CostParams, DPSolution, Grid, InfeasibleProblemError,
                    RolloutInfeasibleError, Trajectory, TRAJECTORY_COLUMNS, read_trajectory_csv)
from .core import (StepOutcome, exhaustive_oracle, greedy_control, initial_value,
                   interpolated_oracle, rollout,
                   sc_power_range, simulate_controls, solve_backward, stage_cost)

__all__ = [
    "CostBreakdown", "CostParams", "DPSolution", "Grid", "InfeasibleProblemError",
    "RolloutInfeasibleError", "Trajectory", "TRAJECTORY_COLUMNS", "read_trajectory_csv",
    "StepOutcome", "exhaustive_oracle", "greedy_control", "initial_value", "interpolated_oracle", "rollout",
    "sc_power_range", "simulate_controls", "solve_backward", "stage_cost",
]

"""Adversary-anticipating binary classification via pessimistic bilevel training."""

from .baseline import BaselineConfig, BaselineResult, classify, train_baseline
from .evaluation import ConfusionCounts, confusion, f1_score, p4_score
from .generator import (
    GeneratorParams,
    NoiseMatrix,
    draw_noise,
    generate_matrix,
    generate_row,
    smooth_step,
    smooth_step_derivs,
    step_inverse_cdf,
)
from .lm import LmConfig, SingularSystemError, SolverState, SolveStatus, solve, solve_stationarity
from .objectives import (
    BowDataset,
    logistic_loss,
    lower_gradients,
    lower_hessians,
    lower_objective,
    predict,
    upper_gradients,
    upper_hessians,
    upper_objective,
)
from .stationarity import (
    BilevelProblem,
    assemble_jacobian,
    assemble_residual,
    finite_difference_jacobian,
    pack_point,
    unpack_point,
)

__all__ = [name for name in dir() if not name.startswith("_")]

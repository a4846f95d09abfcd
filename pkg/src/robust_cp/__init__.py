"""Robust CP tensor factorization under a smoothed l1 loss."""

__version__ = "0.1.0"

from .cp import CpOptions, FitResult, cpal1_fit, cpals_fit, nvecs, update_factor_l1
from .evaluation import FmsReport, factor_match_score, normalize_columns
from .l1 import L1Problem, NumericalError, SolverOptions, SolveTrace, solve
from .tensor import (
    KruskalModel,
    fold,
    frobenius_norm,
    khatri_rao,
    khatri_rao_all_but,
    matricize,
    reconstruct,
    smoothed_l1_objective,
)

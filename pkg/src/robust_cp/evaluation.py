"""Factor match score between an estimated and a reference CP model."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .tensor import KruskalModel


@dataclass(frozen=True)
class FmsReport:
    """``permutation[r]`` is the estimated component matched to true component ``r``."""

    score: float
    permutation: tuple
    component_scores: tuple


def normalize_columns(model: KruskalModel):
    """Scale every factor column to unit length.

    Returns the normalized model and per-component weights (products of the
    original column norms) such that multiplying any one factor's columns by
    the weights recovers the original tensor. A zero column gets weight 0 and
    the first unit vector as its direction, with a warning.
    """
    factors = []
    weights = np.ones(model.rank)
    for f in model.factors:
        norms = np.linalg.norm(f, axis=0)
        zero = norms == 0
        g = f / np.where(zero, 1.0, norms)
        if zero.any():
            warnings.warn("zero column encountered while normalizing", RuntimeWarning)
            g[:, zero] = 0.0
            g[0, zero] = 1.0
        factors.append(g)
        weights = weights * norms
    return KruskalModel(factors), weights


def congruence_matrix(estimated: KruskalModel, truth: KruskalModel, weight_penalty=False):
    """``C[r, s]``: product over modes of ``|<true col r, est col s>|`` after normalizing.

    With ``weight_penalty`` each entry is also multiplied by
    ``1 - |w_r - w_s| / max(w_r, w_s)`` where ``w`` are the component weights
    returned by :func:`normalize_columns`.
    """
    if estimated.rank != truth.rank:
        raise ValueError(f"rank mismatch: {estimated.rank} vs {truth.rank}")
    if estimated.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimated.shape} vs {truth.shape}")
    est, w_est = normalize_columns(estimated)
    tru, w_tru = normalize_columns(truth)
    scores = np.ones((truth.rank, truth.rank))
    for a, b in zip(tru.factors, est.factors):
        scores *= np.abs(a.T @ b)
    if weight_penalty:
        big = np.maximum(w_tru[:, None], w_est[None, :])
        diff = np.abs(w_tru[:, None] - w_est[None, :])
        scores *= 1.0 - np.divide(diff, big, out=np.zeros_like(big), where=big > 0)
    return np.clip(scores, 0.0, 1.0)


def factor_match_score(estimated: KruskalModel, truth: KruskalModel,
                       weight_penalty=False) -> FmsReport:
    """Mean per-component congruence under the best one-to-one matching.

    Scale and sign of individual columns are ignored; the matching maximizes
    the summed congruence. Component weights are ignored unless
    ``weight_penalty`` is set, see :func:`congruence_matrix`.
    """
    scores = congruence_matrix(estimated, truth, weight_penalty)
    rows, cols = linear_sum_assignment(scores, maximize=True)
    perm = cols[np.argsort(rows)]
    comp = scores[np.arange(truth.rank), perm]
    return FmsReport(float(np.mean(comp)), tuple(int(p) for p in perm),
                     tuple(float(c) for c in comp))

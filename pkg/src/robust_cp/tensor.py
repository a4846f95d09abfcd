"""Dense tensor and Kruskal-model primitives.

Dense tensors are plain ``numpy.ndarray`` objects of dtype float64. Whenever a
tensor is flattened (file I/O, matricization) the first index varies fastest,
i.e. Fortran order. With that convention the mode-n unfolding of a Kruskal
tensor satisfies ``X_(n) = U_n @ khatri_rao_all_but(model, n).T``.

Modes are 0-based throughout the Python API.
"""

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np


def as_tensor(values, shape=None):
    """Validate and return ``values`` as a float64 tensor of order >= 2.

    If ``shape`` is given, ``values`` is a flat sequence in first-index-fastest
    order and is reshaped accordingly.
    """
    arr = np.asarray(values, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in shape):
            raise ValueError(f"dimension sizes must be positive, got {shape}")
        if arr.size != int(np.prod(shape)):
            raise ValueError(
                f"{arr.size} values cannot fill a tensor of shape {shape}"
            )
        arr = arr.reshape(shape, order="F")
    if arr.ndim < 2:
        raise ValueError(f"tensor order must be at least 2, got {arr.ndim}")
    return arr


def _check_mode(mode, order):
    if not 0 <= mode < order:
        raise IndexError(f"mode {mode} out of range for an order-{order} tensor")


def matricize(tensor, mode):
    """Mode-``mode`` unfolding: the mode fibers become the columns.

    Tensor element ``(i_0, ..., i_{N-1})`` lands in row ``i_mode``; the column
    index is built from the remaining indices with the lowest mode varying
    fastest.
    """
    tensor = np.asarray(tensor)
    _check_mode(mode, tensor.ndim)
    return np.reshape(
        np.moveaxis(tensor, mode, 0), (tensor.shape[mode], -1), order="F"
    )


def fold(matrix, mode, shape):
    """Inverse of :func:`matricize`."""
    matrix = np.asarray(matrix, dtype=np.float64)
    shape = tuple(int(s) for s in shape)
    _check_mode(mode, len(shape))
    rest = shape[:mode] + shape[mode + 1:]
    expected = (shape[mode], int(np.prod(rest)))
    if matrix.shape != expected:
        raise ValueError(
            f"matrix of shape {matrix.shape} cannot be folded along mode {mode} "
            f"into {shape}; expected {expected}"
        )
    moved = np.reshape(matrix, (shape[mode],) + rest, order="F")
    return np.moveaxis(moved, 0, mode)


def khatri_rao(a, b):
    """Column-wise Kronecker product.

    Column ``r`` of the result is ``kron(a[:, r], b[:, r])`` so the row index
    is ``i * rows(b) + j``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("khatri_rao expects two matrices")
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"column counts differ: {a.shape[1]} vs {b.shape[1]}"
        )
    return (a[:, None, :] * b[None, :, :]).reshape(-1, a.shape[1])


@dataclass(frozen=True)
class KruskalModel:
    """A rank-R CP model stored as one ``I_n x R`` factor matrix per mode."""

    factors: tuple

    def __post_init__(self):
        factors = tuple(np.array(f, dtype=np.float64) for f in self.factors)
        if len(factors) < 2:
            raise ValueError("a Kruskal model needs at least two factors")
        for n, f in enumerate(factors):
            if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
                raise ValueError(f"factor {n} must be a non-empty matrix")
        ranks = {f.shape[1] for f in factors}
        if len(ranks) != 1:
            raise ValueError(f"factors have inconsistent column counts {sorted(ranks)}")
        for f in factors:
            f.flags.writeable = False
        object.__setattr__(self, "factors", factors)

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def shape(self) -> tuple:
        return tuple(f.shape[0] for f in self.factors)

    def replace(self, mode, factor):
        """Return a copy with factor ``mode`` swapped for ``factor``."""
        factors = list(self.factors)
        factors[mode] = factor
        return KruskalModel(factors)

    def check_compatible(self, tensor):
        if tuple(tensor.shape) != self.shape:
            raise ValueError(
                f"model shape {self.shape} does not match tensor shape {tuple(tensor.shape)}"
            )


def khatri_rao_all_but(model: KruskalModel, skip: int):
    """Khatri-Rao product of every factor except ``skip``, highest mode first.

    For a three-way model ``(A, B, C)`` and ``skip=0`` this is ``C ⊙ B``.
    """
    _check_mode(skip, model.order)
    others = [f for n, f in enumerate(model.factors) if n != skip]
    return reduce(khatri_rao, reversed(others))


def reconstruct(model: KruskalModel):
    """Full tensor with entries ``sum_r prod_n U_n[i_n, r]``."""
    out = model.factors[0]
    for f in model.factors[1:]:
        out = out[..., None, :] * f
    return out.sum(axis=-1)


def frobenius_norm(tensor) -> float:
    flat = np.ravel(np.asarray(tensor, dtype=np.float64))
    scale = float(np.max(np.abs(flat))) if flat.size else 0.0
    if scale == 0.0 or not np.isfinite(scale):
        return scale
    # scaled to avoid underflow/overflow when squaring
    return scale * float(np.linalg.norm(flat / scale))


def smoothed_l1_objective(tensor, model: KruskalModel, eps: float, mu: float) -> float:
    """``sum sqrt(residual**2 + eps) + mu/2 * sum_n ||U_n||_F**2``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    tensor = np.asarray(tensor, dtype=np.float64)
    model.check_compatible(tensor)
    resid = tensor - reconstruct(model)
    ridge = sum(float(np.sum(f * f)) for f in model.factors)
    return float(np.sum(np.sqrt(resid * resid + eps))) + 0.5 * mu * ridge


def random_model(shape: Sequence[int], rank: int, rng) -> KruskalModel:
    """Factors with i.i.d. uniform(0, 1) entries."""
    return KruskalModel([rng.uniform(0.0, 1.0, size=(s, rank)) for s in shape])

"""CP model fitting: robust CPAL1 and the classical CPALS baseline."""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .l1 import SolverOptions, solve_rows
from .tensor import (
    KruskalModel,
    as_tensor,
    frobenius_norm,
    khatri_rao_all_but,
    matricize,
    random_model,
    reconstruct,
    smoothed_l1_objective,
)


@dataclass(frozen=True)
class CpOptions:
    """Settings shared by :func:`cpal1_fit` and :func:`cpals_fit`.

    ``init`` is ``"nvecs"``, ``"random"`` (uniform(0, 1) entries drawn from
    ``seed``) or a :class:`KruskalModel` to start from. The inner row solves
    stop on objective change alone by default, so warm-started rows finish
    in a few MM steps once the fit settles. ``threads`` only
    controls how the independent row problems of a CPAL1 factor update are
    spread over workers; results do not depend on it.
    """

    rank: int
    eps: float = 1e-10
    mu: float = 1e-8
    outer_tol: float = 1e-8
    max_outer: int = 500
    inner: SolverOptions = field(
        default_factory=lambda: SolverOptions(tol=1e-9, max_iter=50, stationarity=False)
    )
    init: Union[str, KruskalModel] = "nvecs"
    seed: Optional[int] = None
    threads: int = 1

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if not (self.eps > 0 and self.mu > 0):
            raise ValueError("eps and mu must be positive")
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if isinstance(self.init, str) and self.init not in ("nvecs", "random"):
            raise ValueError(f"unknown init {self.init!r}; use 'nvecs', 'random' or a model")


@dataclass
class FitResult:
    model: KruskalModel
    objective_history: list
    sweeps: int
    converged: bool
    seconds: float = 0.0
    method: str = ""


def nvecs(tensor, mode, r):
    """Leading ``r`` left singular vectors of the mode-``mode`` unfolding.

    Computed from the eigenvectors of the ``I_n x I_n`` Gram matrix. Each
    vector's sign is fixed so that its largest-magnitude entry is positive.
    """
    tensor = as_tensor(tensor)
    dim = tensor.shape[mode]
    if r > dim:
        raise ValueError(
            f"rank {r} exceeds dimension {dim} of mode {mode}; nvecs needs rank <= every dimension"
        )
    unfolded = matricize(tensor, mode)
    gram = unfolded @ unfolded.T
    if not np.any(gram):
        raise ValueError("cannot take singular vectors of an all-zero tensor")
    w, v = np.linalg.eigh(gram)
    v = v[:, np.argsort(w)[::-1][:r]]
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(r)])
    signs[signs == 0] = 1.0
    return v * signs


def initial_model(tensor, opts: CpOptions) -> KruskalModel:
    if isinstance(opts.init, KruskalModel):
        model = opts.init
        model.check_compatible(tensor)
        if model.rank != opts.rank:
            raise ValueError(f"initial model has rank {model.rank}, expected {opts.rank}")
        return model
    if opts.init == "random":
        return random_model(tensor.shape, opts.rank, np.random.default_rng(opts.seed))
    return KruskalModel([nvecs(tensor, n, opts.rank) for n in range(tensor.ndim)])


def _row_blocks(n_rows, threads):
    if threads <= 1 or n_rows < 2:
        return [np.arange(n_rows)]
    return [b for b in np.array_split(np.arange(n_rows), min(threads, n_rows)) if b.size]


def update_factor_l1(tensor, model: KruskalModel, mode: int, opts: CpOptions, executor=None):
    """New factor ``mode``: one smoothed-l1 regression per row.

    Row ``i`` regresses row ``i`` of the mode unfolding on
    ``khatri_rao_all_but(model, mode)``, warm-started at the current row.
    With an ``executor`` the rows are split into blocks solved concurrently.
    """
    tensor = as_tensor(tensor)
    model.check_compatible(tensor)
    Y = matricize(tensor, mode)
    M = khatri_rao_all_but(model, mode)
    U0 = model.factors[mode]
    assert Y.shape[0] == U0.shape[0] and M.shape[1] == model.rank

    def run(rows):
        res = solve_rows(
            Y[rows], M, opts.eps, opts.mu, initial=U0[rows],
            tol=opts.inner.tol, max_iter=opts.inner.max_iter,
            stationarity=opts.inner.stationarity,
        )
        return rows, res.solutions

    blocks = _row_blocks(Y.shape[0], opts.threads if executor is not None else 1)
    out = np.empty_like(U0)
    results = executor.map(run, blocks) if executor is not None and len(blocks) > 1 else map(run, blocks)
    for rows, sol in results:
        out[rows] = sol
    return out


def _relative_change(old, new):
    return abs(old - new) / (1.0 + abs(old))


def cpal1_fit(tensor, opts: CpOptions) -> FitResult:
    """Robust CP fit: round-robin factor updates under the smoothed l1 loss.

    Every sweep updates the factors in mode order. The smoothed l1 objective
    is recorded after each sweep; iteration stops when its relative change
    drops below ``opts.outer_tol`` or after ``opts.max_outer`` sweeps.
    """
    start = time.perf_counter()
    tensor = as_tensor(tensor)
    model = initial_model(tensor, opts)
    prev = smoothed_l1_objective(tensor, model, opts.eps, opts.mu)
    history = []
    converged = False

    executor = ThreadPoolExecutor(opts.threads) if opts.threads > 1 else None
    try:
        for _ in range(opts.max_outer):
            for n in range(tensor.ndim):
                model = model.replace(n, update_factor_l1(tensor, model, n, opts, executor))
            obj = smoothed_l1_objective(tensor, model, opts.eps, opts.mu)
            history.append(obj)
            if _relative_change(prev, obj) < opts.outer_tol:
                converged = True
                break
            prev = obj
    finally:
        if executor is not None:
            executor.shutdown()

    return FitResult(model, history, len(history), converged,
                     time.perf_counter() - start, "cpal1")


def _gram_pinv(gamma, rel_threshold=1e-12):
    w, v = np.linalg.eigh(gamma)
    keep = w > rel_threshold * max(w.max(), 0.0)
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return (v * inv) @ v.T


def cpals_fit(tensor, opts: CpOptions) -> FitResult:
    """Classical alternating least squares.

    Factor ``n`` becomes ``X_(n) Z pinv(Gamma)`` with ``Z`` the Khatri-Rao
    product of the other factors and ``Gamma`` the Hadamard product of their
    Gram matrices. The pseudo-inverse drops eigenvalues below
    ``1e-12 * max eigenvalue``. Stops on the relative change of the Frobenius
    residual. ``eps``, ``mu`` and ``inner`` are ignored.
    """
    start = time.perf_counter()
    tensor = as_tensor(tensor)
    model = initial_model(tensor, opts)
    prev = frobenius_norm(tensor - reconstruct(model))
    history = []
    converged = False

    for _ in range(opts.max_outer):
        for n in range(tensor.ndim):
            gamma = np.ones((opts.rank, opts.rank))
            for m, f in enumerate(model.factors):
                if m != n:
                    gamma *= f.T @ f
            mttkrp = matricize(tensor, n) @ khatri_rao_all_but(model, n)
            model = model.replace(n, mttkrp @ _gram_pinv(gamma))
        resid = frobenius_norm(tensor - reconstruct(model))
        history.append(resid)
        if _relative_change(prev, resid) < opts.outer_tol:
            converged = True
            break
        prev = resid

    return FitResult(model, history, len(history), converged,
                     time.perf_counter() - start, "cpals")

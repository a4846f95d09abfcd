"""Smoothed, ridge-regularized l1 regression by majorization-minimization.

For an observation vector ``y`` (length I) and a design matrix ``M`` (I x J)
the loss is::

    L(u) = sum_i sqrt(r_i(u)**2 + eps) + mu/2 * ||u||**2,   r(u) = y - M u

Each MM step minimizes the quadratic majorizer at the current point, which
is the weighted ridge problem::

    (M^T W M + mu I) u = M^T W y,   W_ii = (r_i(u_current)**2 + eps)**-0.5

i.e. iteratively reweighted least squares. The diagonal ``W`` is never
formed; weights scale the rows of ``M``.

The compiled kernel works on a batch of independent problems sharing one
``M`` (the rows of a factor matrix in CP fitting). Each row is solved on its
own, so its output does not depend on which other rows are in the batch.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit


class NumericalError(RuntimeError):
    """The positive-definite weighted system could not be factored."""


@dataclass(frozen=True)
class L1Problem:
    y: np.ndarray
    m: np.ndarray
    eps: float
    mu: float

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        m = np.asarray(self.m, dtype=np.float64)
        if m.ndim == 1:
            m = m[:, None]
        if m.ndim != 2:
            raise ValueError("design matrix must be two-dimensional")
        if m.shape[0] != y.shape[0]:
            raise ValueError(
                f"y has length {y.shape[0]} but M has {m.shape[0]} rows"
            )
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "m", m)

    @property
    def n_params(self) -> int:
        return self.m.shape[1]

    def residual(self, u):
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.n_params,):
            raise ValueError(
                f"expected a vector of length {self.n_params}, got shape {u.shape}"
            )
        return self.y - self.m @ u


@dataclass(frozen=True)
class SolverOptions:
    """Stopping controls for :func:`solve`.

    A problem counts as converged once ``|L_k - L_{k+1}| / (1 + |L_k|) < tol``
    and, when ``stationarity`` is set, ``||grad L(u_{k+1})|| <= tol * (1 +
    ||grad L(u_0)||)``. The gradient test matters for tiny ``eps``: near a
    kink the curvature is of order ``eps**-0.5`` and the objective stalls
    long before the gradient does. Iteration stops after ``max_iter`` MM
    steps regardless.
    """

    tol: float = 1e-9
    max_iter: int = 100
    initial: Optional[np.ndarray] = None
    stationarity: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class SolveTrace:
    objectives: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def smoothed_loss(u, p: L1Problem) -> float:
    r = p.residual(u)
    u = np.asarray(u, dtype=np.float64)
    return float(np.sum(np.sqrt(r * r + p.eps)) + 0.5 * p.mu * (u @ u))


def majorizer(u, u_anchor, p: L1Problem) -> float:
    """Quadratic upper bound of :func:`smoothed_loss` that touches it at ``u_anchor``."""
    r = p.residual(u)
    r0 = p.residual(u_anchor)
    u = np.asarray(u, dtype=np.float64)
    s0 = np.sqrt(r0 * r0 + p.eps)
    return float(np.sum(s0 + (r * r - r0 * r0) / (2.0 * s0)) + 0.5 * p.mu * (u @ u))


def gradient(u, p: L1Problem):
    r = p.residual(u)
    u = np.asarray(u, dtype=np.float64)
    return -(p.m.T @ (r / np.sqrt(r * r + p.eps))) + p.mu * u


_OK, _NOT_PD, _NOT_FINITE = 0, 1, 2


# Reassociation lets the reductions below vectorize. Every row runs the same
# loops over the same lengths, so rows stay independent of the batch.
_jit = njit(cache=True, nogil=True, fastmath={"reassoc", "contract"})


@_jit
def _evaluate(y, MT, u, eps, mu, r, s):
    """Fill residuals ``r`` and ``s = sqrt(r**2 + eps)``; return the loss."""
    J, I = MT.shape
    for i in range(I):
        r[i] = y[i]
    for a in range(J):
        ua = u[a]
        row = MT[a]
        for i in range(I):
            r[i] -= row[i] * ua
    total = 0.0
    for i in range(I):
        s[i] = np.sqrt(r[i] * r[i] + eps)
        total += s[i]
    ridge = 0.0
    for a in range(J):
        ridge += u[a] * u[a]
    return total + 0.5 * mu * ridge


@_jit
def _gradient_norm(MT, u, mu, r, s, q):
    J, I = MT.shape
    for i in range(I):
        q[i] = r[i] / s[i]
    total = 0.0
    for a in range(J):
        row = MT[a]
        acc = 0.0
        for i in range(I):
            acc += row[i] * q[i]
        g = mu * u[a] - acc
        total += g * g
    return np.sqrt(total)


@_jit
def _mm_update(y, MT, mu, s, w, q, G, b, u):
    """Overwrite ``u`` with the minimizer of the majorizer built from weights ``1/s``."""
    J, I = MT.shape
    for i in range(I):
        w[i] = 1.0 / s[i]
        q[i] = w[i] * y[i]
    for a in range(J):
        ra = MT[a]
        acc = 0.0
        for i in range(I):
            acc += ra[i] * q[i]
        b[a] = acc
        for c in range(a + 1):
            rc = MT[c]
            acc = 0.0
            for i in range(I):
                acc += ra[i] * w[i] * rc[i]
            G[a, c] = acc
        G[a, a] += mu
    # Cholesky of the lower triangle in place, then two substitutions
    for a in range(J):
        d = G[a, a]
        for k in range(a):
            d -= G[a, k] * G[a, k]
        if not d > 0.0:
            return _NOT_PD
        d = np.sqrt(d)
        G[a, a] = d
        for c in range(a + 1, J):
            acc = G[c, a]
            for k in range(a):
                acc -= G[c, k] * G[a, k]
            G[c, a] = acc / d
    for a in range(J):
        acc = b[a]
        for k in range(a):
            acc -= G[a, k] * b[k]
        b[a] = acc / G[a, a]
    for a in range(J - 1, -1, -1):
        acc = b[a]
        for k in range(a + 1, J):
            acc -= G[k, a] * u[k]
        u[a] = acc / G[a, a]
        if not np.isfinite(u[a]):
            return _NOT_FINITE
    return _OK


@_jit
def _solve_rows_kernel(Y, MT, eps, mu, U, tol, max_iter, stationarity, history):
    rows, I = Y.shape
    J = MT.shape[0]
    iters = np.zeros(rows, dtype=np.int64)
    converged = np.zeros(rows, dtype=np.bool_)
    objectives = np.empty(rows)
    status = np.zeros(rows, dtype=np.int64)
    record = history.shape[1] > 0
    r = np.empty(I)
    s = np.empty(I)
    w = np.empty(I)
    q = np.empty(I)
    G = np.empty((J, J))
    b = np.empty(J)
    u = np.empty(J)
    for k in range(rows):
        y = Y[k]
        for a in range(J):
            u[a] = U[k, a]
        obj = _evaluate(y, MT, u, eps, mu, r, s)
        gtol = 0.0
        if stationarity:
            gtol = tol * (1.0 + _gradient_norm(MT, u, mu, r, s, q))
        if record:
            history[k, 0] = obj
        for it in range(max_iter):
            code = _mm_update(y, MT, mu, s, w, q, G, b, u)
            if code != _OK:
                status[k] = code
                break
            new = _evaluate(y, MT, u, eps, mu, r, s)
            iters[k] = it + 1
            if record:
                history[k, it + 1] = new
            stop = abs(obj - new) / (1.0 + abs(obj)) < tol
            obj = new
            if stop and stationarity:
                stop = _gradient_norm(MT, u, mu, r, s, q) <= gtol
            if stop:
                converged[k] = True
                break
        for a in range(J):
            U[k, a] = u[a]
        objectives[k] = obj
    return iters, converged, objectives, status


def _check_status(status):
    if np.any(status == _NOT_PD):
        raise NumericalError("weighted normal equations are not positive definite")
    if np.any(status == _NOT_FINITE):
        raise NumericalError("MM step produced non-finite values")


def _prepare(Y, M, eps, mu, initial):
    Y = np.ascontiguousarray(np.atleast_2d(np.asarray(Y, dtype=np.float64)))
    M = np.asarray(M, dtype=np.float64)
    rows, J = Y.shape[0], M.shape[1]
    if Y.shape[1] != M.shape[0]:
        raise ValueError(f"rows of Y have length {Y.shape[1]}, M has {M.shape[0]} rows")
    if not eps > 0 or not mu > 0:
        raise ValueError("eps and mu must be positive")
    if initial is None:
        U = np.zeros((rows, J))
    else:
        U = np.array(initial, dtype=np.float64).reshape(rows, J)
    return Y, np.ascontiguousarray(M.T), U


def mm_step(u_current, p: L1Problem):
    """Minimizer of the majorizer anchored at ``u_current``."""
    u = np.asarray(u_current, dtype=np.float64)
    p.residual(u)
    Y, MT, U = _prepare(p.y, p.m, p.eps, p.mu, u)
    _, _, _, status = _solve_rows_kernel(Y, MT, p.eps, p.mu, U, 0.0, 1, False, np.empty((1, 0)))
    _check_status(status)
    return U[0]


@dataclass
class RowsResult:
    solutions: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    objectives: np.ndarray
    history: Optional[np.ndarray] = None


def solve_rows(Y, M, eps, mu, initial=None, tol=1e-9, max_iter=100,
               stationarity=True, record=False):
    """Solve ``min_u L(u; y_k, M)`` independently for every row ``y_k`` of ``Y``.

    Parameters
    ----------
    Y : ndarray, shape (rows, I)
    M : ndarray, shape (I, J)
    eps, mu : float
        Smoothing and ridge constants, both positive.
    initial : ndarray, shape (rows, J), optional
        Warm starts; zeros when omitted.
    tol, max_iter, stationarity
        Per-row stopping rule, see :class:`SolverOptions`.
    record : bool
        Keep the per-iteration objectives in ``history`` (shape
        ``(rows, max_iter + 1)``, NaN past each row's last iteration).

    Returns
    -------
    RowsResult
        Rows are solved one after another with scalar loops, so a row's
        result does not depend on the other rows in the batch. MM steps never
        increase the objective in exact arithmetic; in floating point the
        recorded sequence can rise by a few ulps once a row sits at its
        rounding floor.
    """
    Y, MT, U = _prepare(Y, M, eps, mu, initial)
    history = np.full((Y.shape[0], max_iter + 1 if record else 0), np.nan)
    iters, converged, objectives, status = _solve_rows_kernel(
        Y, MT, float(eps), float(mu), U, float(tol), int(max_iter), bool(stationarity), history
    )
    _check_status(status)
    return RowsResult(U, iters, converged, objectives, history if record else None)


def solve(p: L1Problem, opts: SolverOptions = SolverOptions()):
    """Run MM steps from ``opts.initial`` (zeros by default) until converged.

    Returns the final point and a :class:`SolveTrace` whose objectives start
    at the initial point.
    """
    initial = None if opts.initial is None else np.asarray(opts.initial)[None, :]
    res = solve_rows(
        p.y[None, :], p.m, p.eps, p.mu, initial=initial,
        tol=opts.tol, max_iter=opts.max_iter, stationarity=opts.stationarity,
        record=True,
    )
    n = int(res.iterations[0])
    objectives = [float(h) for h in res.history[0, : n + 1]]
    trace = SolveTrace(objectives, n, bool(res.converged[0]))
    return res.solutions[0], trace

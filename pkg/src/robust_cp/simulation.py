"""Synthetic corrupted low-rank tensors and the replicated CPAL1 vs CPALS study.

Random streams
--------------
Replicate ``k`` of a run with seed ``s`` draws from three independent streams
``SeedSequence(s, spawn_key=(k, j))`` for ``j = 0`` (true factors), ``1``
(artifact tensor) and ``2`` (Gaussian tensor). Replicates can therefore run
in any order or in parallel with identical results, and replicate ``k`` sees
the same true model in every (eta, gamma) cell of a grid.
"""

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .cp import CpOptions, cpal1_fit, cpals_fit
from .evaluation import factor_match_score
from .l1 import SolverOptions
from .tensor import KruskalModel, frobenius_norm, reconstruct

log = logging.getLogger(__name__)

CSV_HEADER = ("replicate", "eta", "gamma", "method", "fms", "seconds", "sweeps", "converged")


@dataclass(frozen=True)
class SimConfig:
    dims: Tuple[int, ...] = (50, 50, 50)
    rank: int = 5
    eta: float = 0.1
    gamma: float = 1.0
    gaussian_level: float = 0.1
    replicates: int = 100
    seed: int = 0
    eps: float = 1e-10
    mu: float = 1e-8
    outer_tol: float = 1e-8
    max_outer: int = 500
    inner_tol: float = 1e-9
    inner_max_iter: int = 50

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) < 2 or any(d < 1 for d in self.dims):
            raise ValueError(f"invalid dims {self.dims}")
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if min(self.dims) < self.rank:
            raise ValueError(
                f"rank {self.rank} exceeds the smallest dimension {min(self.dims)}; "
                "nvecs initialization needs rank <= every dimension"
            )
        if not 0 < self.eta < 1:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if self.gamma < 0 or self.gaussian_level < 0:
            raise ValueError("gamma and gaussian_level must be nonnegative")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")

    def cp_options(self) -> CpOptions:
        return CpOptions(
            rank=self.rank, eps=self.eps, mu=self.mu, outer_tol=self.outer_tol,
            max_outer=self.max_outer,
            inner=SolverOptions(tol=self.inner_tol, max_iter=self.inner_max_iter,
                                stationarity=False),
            init="nvecs",
        )


@dataclass(frozen=True)
class ExperimentRecord:
    replicate: int
    eta: float
    gamma: float
    method: str
    fms: float
    seconds: float
    sweeps: int
    converged: bool


def replicate_rngs(seed: int, replicate: int):
    """Generators for the true model, the artifact tensor and the Gaussian tensor."""
    return tuple(
        np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replicate, j)))
        for j in range(3)
    )


def generate_true_model(dims: Sequence[int], r: int, rng) -> KruskalModel:
    """Factors with entries ``|z|``, ``z`` standard normal."""
    return KruskalModel([np.abs(rng.standard_normal((d, r))) for d in dims])


def generate_artifact_tensor(dims: Sequence[int], eta: float, rng):
    """Sparse positive outliers.

    Exactly ``round(eta * size)`` entries, sampled without replacement, hold
    Gamma(shape=50, scale=1/50) draws; the rest are zero.
    """
    if not 0 < eta < 1:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    size = int(np.prod(dims))
    count = int(math.floor(eta * size + 0.5))
    flat = np.zeros(size)
    idx = rng.choice(size, size=count, replace=False)
    flat[idx] = rng.gamma(50.0, 1.0 / 50.0, size=count)
    return flat.reshape(tuple(dims), order="F")


def generate_gaussian_tensor(dims: Sequence[int], rng):
    return rng.standard_normal(tuple(dims))


def _scaled(x, noise, level):
    norm = frobenius_norm(noise)
    if norm == 0:
        raise ValueError("noise tensor has zero Frobenius norm")
    return (level * frobenius_norm(x) / norm) * noise


def corrupt(x, p, q, gamma: float, gaussian_level: float = 0.1):
    """``x + gamma ||x||/||p|| p + gaussian_level ||x||/||q|| q``."""
    x, p, q = (np.asarray(a, dtype=np.float64) for a in (x, p, q))
    if not x.shape == p.shape == q.shape:
        raise ValueError(f"shape mismatch: {x.shape}, {p.shape}, {q.shape}")
    return x + _scaled(x, p, gamma) + _scaled(x, q, gaussian_level)


def check_artifact_scale(x, p, q, gamma: float, gaussian_level: float = 0.1) -> bool:
    """True if every scaled Gaussian entry is smaller in magnitude than ``max(x)``."""
    return bool(np.max(np.abs(_scaled(x, q, gaussian_level))) < np.max(x))


def check_artifact_term_scale(x, p, gamma: float) -> bool:
    """Same diagnostic for the scaled artifact term."""
    return bool(np.max(np.abs(_scaled(x, p, gamma))) < np.max(x))


def make_replicate(config: SimConfig, replicate: int):
    """True model, clean tensor and corrupted tensor for one replicate."""
    model_rng, artifact_rng, gauss_rng = replicate_rngs(config.seed, replicate)
    truth = generate_true_model(config.dims, config.rank, model_rng)
    x = reconstruct(truth)
    p = generate_artifact_tensor(config.dims, config.eta, artifact_rng)
    q = generate_gaussian_tensor(config.dims, gauss_rng)
    corrupted = corrupt(x, p, q, config.gamma, config.gaussian_level)
    log.debug(
        "replicate %d eta=%g gamma=%g: gaussian term below max(X): %s, artifact term below max(X): %s",
        replicate, config.eta, config.gamma,
        check_artifact_scale(x, p, q, config.gamma, config.gaussian_level),
        check_artifact_term_scale(x, p, config.gamma),
    )
    return truth, x, corrupted


def run_replicate(config: SimConfig, replicate: int) -> List[ExperimentRecord]:
    truth, _, corrupted = make_replicate(config, replicate)
    opts = config.cp_options()
    records = []
    for name, fit in (("cpal1", cpal1_fit), ("cpals", cpals_fit)):
        try:
            res = fit(corrupted, opts)
        except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
            log.warning("replicate %d: %s fit failed: %s", replicate, name, exc)
            records.append(ExperimentRecord(replicate, config.eta, config.gamma, name,
                                            float("nan"), 0.0, 0, False))
            continue
        fms = factor_match_score(res.model, truth).score
        records.append(ExperimentRecord(replicate, config.eta, config.gamma, name,
                                        fms, res.seconds, res.sweeps, res.converged))
    return records


def _run_job(job):
    config, replicate = job
    return run_replicate(config, replicate)


def run_grid(configs: Iterable[SimConfig], workers: int = 1) -> List[ExperimentRecord]:
    """All replicates of all configs, ordered by config then replicate then method."""
    jobs = [(c, k) for c in configs for k in range(c.replicates)]
    if workers == 0:
        workers = os.cpu_count() or 1
    if workers <= 1:
        chunks = map(_run_job, jobs)
        return [r for chunk in chunks for r in chunk]
    with ProcessPoolExecutor(workers) as pool:
        return [r for chunk in pool.map(_run_job, jobs) for r in chunk]


def run_experiment(config: SimConfig, workers: int = 1) -> List[ExperimentRecord]:
    """Fit CPAL1 and CPALS to ``config.replicates`` corrupted tensors."""
    return run_grid([config], workers)


def grid_configs(base: SimConfig, etas: Sequence[float], gammas: Sequence[float]):
    return [replace(base, eta=e, gamma=g) for e in etas for g in gammas]


def _fmt(x: float) -> str:
    return repr(float(x))


def record_row(rec: ExperimentRecord, timing: bool = True):
    return [
        str(rec.replicate), _fmt(rec.eta), _fmt(rec.gamma), rec.method, _fmt(rec.fms),
        _fmt(rec.seconds if timing else 0.0), str(rec.sweeps), str(rec.converged).lower(),
    ]


def write_csv(records: Iterable[ExperimentRecord], stream, timing: bool = True):
    """Write records with the fixed header. ``timing=False`` writes 0 seconds."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in records:
        writer.writerow(record_row(rec, timing))


def read_csv(stream) -> List[ExperimentRecord]:
    reader = csv.DictReader(stream)
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    return [
        ExperimentRecord(
            int(row["replicate"]), float(row["eta"]), float(row["gamma"]), row["method"],
            float(row["fms"]), float(row["seconds"]), int(row["sweeps"]),
            row["converged"] == "true",
        )
        for row in reader
    ]

"""Acceptance criteria, each at its stated tolerance.

Run ``pytest tests/test_acceptance.py -v`` to see one PASS/FAIL line per
criterion in the terminal summary. Criterion 6 is marked slow.
"""

import time

import numpy as np
import pytest

from oracles import brute_force_median_1d, grid_polish_minimum
from robust_cp.cli import main
from robust_cp.cp import cpal1_fit, cpals_fit
from robust_cp.evaluation import factor_match_score
from robust_cp.l1 import L1Problem, SolverOptions, gradient, majorizer, smoothed_loss, solve
from robust_cp.simulation import SimConfig, grid_configs, make_replicate, run_grid
from robust_cp.tensor import KruskalModel, fold, khatri_rao_all_but, matricize, reconstruct


def random_problem(rng, eps=None, mu=None):
    I, J = int(rng.integers(3, 11)), int(rng.integers(1, 4))
    eps = 10.0 ** rng.uniform(-10, -1) if eps is None else eps
    mu = 10.0 ** rng.uniform(-8, 0) if mu is None else mu
    return L1Problem(rng.standard_normal(I) * 3, rng.standard_normal((I, J)), eps, mu)


def test_criterion_1_majorization(criterion):
    rng = np.random.default_rng(101)
    worst_tangent, violations = 0.0, 0
    for _ in range(1000):
        p = random_problem(rng)
        u, anchor = rng.standard_normal((2, p.n_params)) * 3
        loss = smoothed_loss(u, p)
        worst_tangent = max(worst_tangent, abs(majorizer(u, u, p) - loss) / loss)
        violations += majorizer(u, anchor, p) < loss
    ok = criterion(1, worst_tangent <= 1e-12 and violations == 0,
                   f"1000 triples, max tangency gap {worst_tangent:.2e}, domination violations {violations}")
    assert ok


def test_criterion_2_descent_and_global_optimum(criterion):
    rng = np.random.default_rng(202)
    worst_gap, rises = 0.0, 0
    for _ in range(100):
        p = random_problem(rng, eps=1e-10, mu=1e-8)
        u, trace = solve(p, SolverOptions(max_iter=50000))
        h = trace.objectives
        # the recorded trace may wobble by a few ulps at the rounding floor
        rises += sum(b > a + 1e-12 * abs(a) for a, b in zip(h, h[1:]))
        _, best = grid_polish_minimum(p.y, p.m, p.eps, p.mu)
        worst_gap = max(worst_gap, (smoothed_loss(u, p) - best) / abs(best))
    y = np.array([1.0, 2.0, 3.0, 10.0, 100.0])
    med = L1Problem(y, np.ones((5, 1)), 1e-10, 1e-8)
    u_med = solve(med)[0][0]
    oracle = brute_force_median_1d(y, med.eps, med.mu, 0.0, 110.0, points=1100001)
    median_ok = abs(u_med - 3.0) <= 1e-3 and abs(oracle - 3.0) <= 1e-3
    ok = criterion(2, worst_gap <= 1e-6 and rises == 0 and median_ok,
                   f"100 problems, worst excess over oracle {worst_gap:.2e} (relative), "
                   f"trace rises {rises}, median case {u_med:.6f}")
    assert ok


def test_criterion_3_structure_identities(criterion):
    rng = np.random.default_rng(303)
    worst, exact = 0.0, True
    for _ in range(200):
        order = int(rng.integers(2, 5))
        shape = tuple(int(s) for s in rng.integers(1, 6, size=order))
        rank = int(rng.integers(1, 5))
        model = KruskalModel([rng.standard_normal((s, rank)) for s in shape])
        full = reconstruct(model)
        for n in range(order):
            exact &= np.array_equal(fold(matricize(full, n), n, shape), full)
            lhs = matricize(full, n)
            rhs = model.factors[n] @ khatri_rao_all_but(model, n).T
            worst = max(worst, np.linalg.norm(lhs - rhs) / max(np.linalg.norm(lhs), 1e-300))
    ok = criterion(3, exact and worst <= 1e-10,
                   f"200 models, round trip exact {exact}, worst unfolding mismatch {worst:.2e}")
    assert ok


def test_criterion_4_noise_free_recovery(criterion):
    cfg = SimConfig(dims=(20, 20, 20), rank=3, eta=0.1, gamma=0.0, gaussian_level=0.0,
                    replicates=20, seed=0)
    start = time.perf_counter()
    hits = {"cpal1": 0, "cpals": 0}
    for k in range(cfg.replicates):
        truth, _, tensor = make_replicate(cfg, k)
        for name, fit in (("cpal1", cpal1_fit), ("cpals", cpals_fit)):
            hits[name] += factor_match_score(fit(tensor, cfg.cp_options()).model, truth).score >= 0.99
    seconds = time.perf_counter() - start
    ok = criterion(4, min(hits.values()) >= 18 and seconds <= 60.0,
                   f"FMS >= 0.99 in {hits['cpal1']}/20 (CPAL1) and {hits['cpals']}/20 (CPALS), "
                   f"{seconds:.0f} s (target about 60 s)")
    assert ok


def cell_medians(records):
    out = {}
    for r in records:
        out.setdefault((r.eta, r.gamma, r.method), []).append(r.fms)
    return {k: float(np.median(v)) for k, v in out.items()}


def test_criterion_5_robustness_ordering(criterion):
    base = SimConfig(dims=(20, 20, 20), rank=3, gaussian_level=0.1, replicates=20, seed=0)
    start = time.perf_counter()
    records = run_grid(grid_configs(base, [0.1, 0.2], [1.0, 2.0]), workers=0)
    seconds = time.perf_counter() - start
    med = cell_medians(records)
    cells, ok = [], True
    for eta in (0.1, 0.2):
        for gamma in (1.0, 2.0):
            l1, als = med[(eta, gamma, "cpal1")], med[(eta, gamma, "cpals")]
            need = 0.15 if (eta, gamma) == (0.2, 2.0) else 0.05
            cell_ok = l1 - als >= need and (l1 >= 0.80 or (eta, gamma) != (0.2, 2.0))
            ok &= cell_ok
            cells.append(f"({eta},{gamma}) {l1:.3f}-{als:.3f}={l1 - als:.3f}{'' if cell_ok else '!'}")
    criterion(5, ok, f"median CPAL1-CPALS per cell: {'; '.join(cells)}; {seconds:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_6_full_scale_spot_check(criterion):
    cfg = SimConfig(dims=(50, 50, 50), rank=5, eta=0.2, gamma=2.0, replicates=1, seed=0)
    truth, _, tensor = make_replicate(cfg, 0)
    l1 = factor_match_score(cpal1_fit(tensor, cfg.cp_options()).model, truth).score
    als = factor_match_score(cpals_fit(tensor, cfg.cp_options()).model, truth).score
    ok = criterion(6, l1 >= 0.85 and l1 > als + 0.1,
                   f"FMS CPAL1 {l1:.3f}, CPALS {als:.3f}, gap {l1 - als:.3f}")
    assert ok


def test_criterion_7_gradient(criterion):
    rng = np.random.default_rng(707)
    worst_fd = 0.0
    for _ in range(50):
        p = random_problem(rng, eps=10.0 ** rng.uniform(-4, 0), mu=10.0 ** rng.uniform(-3, 0))
        u = rng.standard_normal(p.n_params)
        g = gradient(u, p)
        h = 1e-6
        fd = np.array([(smoothed_loss(u + h * e, p) - smoothed_loss(u - h * e, p)) / (2 * h)
                       for e in np.eye(p.n_params)])
        worst_fd = max(worst_fd, np.linalg.norm(g - fd) / np.linalg.norm(g))
    tol, worst_ratio, unconverged = 1e-9, 0.0, 0
    for _ in range(50):
        p = random_problem(rng, eps=1e-10, mu=1e-8)
        u, trace = solve(p, SolverOptions(tol=tol, max_iter=50000))
        unconverged += not trace.converged
        bound = 10 * tol * (1 + np.linalg.norm(gradient(np.zeros(p.n_params), p)))
        worst_ratio = max(worst_ratio, np.linalg.norm(gradient(u, p)) / bound)
    ok = criterion(7, worst_fd <= 1e-5 and worst_ratio <= 1.0 and unconverged == 0,
                   f"worst finite-difference mismatch {worst_fd:.2e}, "
                   f"worst gradient / stationarity bound {worst_ratio:.2e}")
    assert ok


def test_criterion_8_parallel_determinism(criterion, tmp_path, capsys):
    args = ["simulate", "--dims", "12x12x12", "--rank", "2", "--eta", "0.1,0.2",
            "--gamma", "1.0,2.0", "--replicates", "2", "--seed", "8", "--no-timing"]
    one, many = tmp_path / "one.csv", tmp_path / "many.csv"
    codes = (main(args + ["--threads", "1", "--out", str(one)]),
             main(args + ["--threads", "4", "--out", str(many)]))
    capsys.readouterr()
    same = one.read_bytes() == many.read_bytes()
    ok = criterion(8, codes == (0, 0) and same,
                   f"--threads 1 vs 4 byte-identical: {same}, "
                   f"{len(one.read_text().splitlines()) - 1} rows")
    assert ok

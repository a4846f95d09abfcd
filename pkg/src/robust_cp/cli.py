"""Command-line front end.

Exit codes: 0 success, 1 usage or invalid input, 2 I/O or parse failure,
3 numerical failure.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from . import __version__
from .cp import CpOptions, cpal1_fit, cpals_fit
from .evaluation import factor_match_score
from .io import (
    ParseError,
    read_kruskal,
    read_l1_problem,
    read_tensor,
    write_kruskal,
)
from .l1 import L1Problem, NumericalError, SolverOptions, smoothed_loss, solve
from .plotting import boxplot_svg
from .simulation import SimConfig, grid_configs, read_csv, run_grid, write_csv
from .tensor import frobenius_norm, reconstruct

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("robust_cp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads(value):
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError("threads must be >= 0")
    return n or (os.cpu_count() or 1)


def _float_list(text):
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _dims(text):
    try:
        return tuple(int(t) for t in text.lower().replace("x", " ").replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a dimension list: {text!r}") from None


def write_manifest(path, command, options, inputs=(), outputs=()):
    manifest = {
        "command": command,
        "options": options,
        "seed": options.get("seed"),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=repr)
        fh.write("\n")


def _fit_options(args) -> CpOptions:
    return CpOptions(
        rank=args.rank, eps=args.eps, mu=args.mu, outer_tol=args.outer_tol,
        max_outer=args.max_outer,
        inner=SolverOptions(tol=args.inner_tol, max_iter=args.inner_max_iter, stationarity=False),
        init=args.init, seed=args.seed, threads=args.threads,
    )


def cmd_fit(args):
    tensor = read_tensor(args.tensor)
    if args.init == "nvecs" and args.rank > min(tensor.shape):
        raise UsageError(
            f"rank {args.rank} exceeds the smallest tensor dimension {min(tensor.shape)}; "
            "nvecs initialization requires rank <= every dimension"
        )
    opts = _fit_options(args)
    fit = cpal1_fit if args.method == "cpal1" else cpals_fit
    res = fit(tensor, opts)
    write_kruskal(res.model, args.out)
    rel = frobenius_norm(tensor - reconstruct(res.model)) / max(frobenius_norm(tensor), 1e-300)
    print(f"method: {args.method}")
    print(f"objective: {float(res.objective_history[-1])!r}")
    print(f"relative_residual: {rel!r}")
    print(f"sweeps: {res.sweeps}")
    print(f"converged: {str(res.converged).lower()}")
    print(f"seconds: {res.seconds:.3f}")
    if not res.converged:
        print(f"warning: not converged within {args.max_outer} sweeps")
    write_manifest(f"{args.out}.manifest.json", "fit", _resolved(args), [args.tensor], [args.out])


SIM_KEYS = {
    "dims": _dims, "rank": int, "eta": _float_list, "gamma": _float_list,
    "gaussian_level": float, "replicates": int, "seed": int, "eps": float, "mu": float,
    "outer_tol": float, "max_outer": int, "inner_tol": float, "inner_max_iter": int,
    "threads": _threads,
}


def read_config(path):
    """Flat ``key = value`` file; keys use the long flag names."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError("expected 'key = value'", lineno, path)
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in SIM_KEYS:
                raise ParseError(f"unknown key {key!r}", lineno, path)
            try:
                values[key] = SIM_KEYS[key](value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ParseError(f"bad value for {key}: {exc}", lineno, path) from None
    return values


def _sim_settings(args):
    defaults = {f.name: f.default for f in fields(SimConfig)}
    defaults.update(eta=[0.1, 0.2], gamma=[0.5, 1.0, 1.5, 2.0], threads=1)
    settings = dict(defaults)
    if args.config:
        settings.update(read_config(args.config))
    for key in SIM_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def cmd_simulate(args):
    if args.plot_only:
        if not args.plot:
            raise UsageError("--plot-only needs --plot")
        with open(args.out) as fh:
            records = read_csv(fh)
        _write_plot(args.plot, records, args.force)
        return

    settings = _sim_settings(args)
    base = SimConfig(**{k: v for k, v in settings.items() if k not in ("eta", "gamma", "threads")
                        and k in {f.name for f in fields(SimConfig)}},
                     eta=settings["eta"][0], gamma=settings["gamma"][0])
    try:
        configs = grid_configs(base, settings["eta"], settings["gamma"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not configs:
        raise UsageError("empty eta/gamma grid")
    for path in (args.out, args.plot):
        if path and os.path.exists(path) and not args.force:
            raise UsageError(f"{path} exists; pass --force to overwrite")

    records = run_grid(configs, settings["threads"])
    with open(args.out, "w", newline="") as fh:
        write_csv(records, fh, timing=not args.no_timing)
    print(f"wrote {len(records)} records to {args.out}")
    outputs = [args.out]
    if args.plot:
        _write_plot(args.plot, records, True)
        outputs.append(args.plot)
    options = dict(settings, no_timing=args.no_timing)
    write_manifest(f"{args.out}.manifest.json", "simulate", options,
                   [args.config] if args.config else [], outputs)


def _write_plot(path, records, force):
    if os.path.exists(path) and not force:
        raise UsageError(f"{path} exists; pass --force to overwrite")
    with open(path, "w") as fh:
        fh.write(boxplot_svg(records))
    print(f"wrote boxplots to {path}")


def cmd_evaluate(args):
    est = read_kruskal(args.estimated)
    truth = read_kruskal(args.truth)
    if est.rank != truth.rank or est.shape != truth.shape:
        raise UsageError(
            f"models differ: rank {est.rank} shape {est.shape} vs rank {truth.rank} shape {truth.shape}"
        )
    report = factor_match_score(est, truth)
    print(",".join(repr(float(v)) for v in (report.score,) + report.component_scores))


def cmd_l1solve(args):
    m, y = read_l1_problem(args.problem)
    try:
        problem = L1Problem(y, m, args.eps, args.mu)
        opts = SolverOptions(tol=args.tol, max_iter=args.max_iter)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    u, trace = solve(problem, opts)
    text = "".join(f"{float(v)!r}\n" for v in u)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"# objective {float(smoothed_loss(u, problem))!r} iterations {trace.iterations} "
          f"converged {str(trace.converged).lower()}", file=sys.stderr)


def _resolved(args):
    return {k: v for k, v in vars(args).items() if k != "func"}


def build_parser():
    parser = _Parser(prog="robust-cp", description="Robust CP tensor factorization under a smoothed l1 loss.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a CP model to a tensor file")
    p.add_argument("tensor")
    p.add_argument("--method", choices=["cpal1", "cpals"], default="cpal1")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--eps", type=float, default=1e-10)
    p.add_argument("--mu", type=float, default=1e-8)
    p.add_argument("--outer-tol", type=float, default=1e-8)
    p.add_argument("--max-outer", type=int, default=500)
    p.add_argument("--inner-tol", type=float, default=1e-9)
    p.add_argument("--inner-max-iter", type=int, default=50)
    p.add_argument("--init", choices=["nvecs", "random"], default="nvecs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_threads, default=1)
    p.add_argument("--out", required=True, help="output model file")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run the corrupted-tensor recovery study")
    p.add_argument("--config", help="key = value file; flags take precedence")
    p.add_argument("--dims", type=_dims)
    p.add_argument("--rank", type=int)
    p.add_argument("--eta", type=_float_list, help="comma-separated artifact fractions")
    p.add_argument("--gamma", type=_float_list, help="comma-separated artifact strengths")
    p.add_argument("--gaussian-level", type=float)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--outer-tol", type=float)
    p.add_argument("--max-outer", type=int)
    p.add_argument("--inner-tol", type=float)
    p.add_argument("--inner-max-iter", type=int)
    p.add_argument("--threads", type=_threads, help="worker processes, 0 = all cores")
    p.add_argument("--out", required=True, help="CSV output (input with --plot-only)")
    p.add_argument("--plot", help="write an SVG boxplot here")
    p.add_argument("--plot-only", action="store_true", help="plot an existing CSV")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--no-timing", action="store_true",
                   help="write 0 in the seconds column so output is reproducible byte for byte")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="factor match score of two model files")
    p.add_argument("estimated")
    p.add_argument("truth")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("l1solve", help=argparse.SUPPRESS)
    p.add_argument("problem")
    p.add_argument("--eps", type=float, default=1e-10)
    p.add_argument("--mu", type=float, default=1e-8)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_l1solve)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"robust-cp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, OSError) as exc:
        print(f"robust-cp: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"robust-cp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"robust-cp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: generate, solve, tune-lambda, bench, eval.

Configuration precedence is flags > config file > defaults; every run
writes a manifest echo with the resolved options so it can be reproduced
bit-exactly.  Exit codes: 0 success, 1 numerical failure, 2 configuration
rejection.
"""

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import solvers
from .dual import ProjectionBudgetError, tune_lambda
from .model import ProjectionInstance, Regularizer
from .network import TopologySpec, generate_network
from .primal import NumericalFailure, RestartBudgetError, SolverConfig
from .routes import PatternFormatError, load_pattern, store_pattern

_OUT_ENV = "TOMOSOLVE_OUT"


class CliError(Exception):
    """Configuration problem; exits with code 2."""


def _out_dir(args):
    out = getattr(args, "out_dir", None) or os.environ.get(_OUT_ENV) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_vector(path, v):
    np.savetxt(path, np.asarray(v, dtype=np.float64), fmt="%.17g")


def _read_vector(path):
    v = np.loadtxt(path, dtype=np.float64, ndmin=1)
    return v


def _write_manifest(out_dir, command, options):
    options = {k: v for k, v in options.items() if k != "fn"}
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump({"command": command, "options": options}, fh, indent=2, default=str)
    return path


# value flags are parsed with default=None so a config file can fill them;
# the hard-coded fallbacks apply last
_FALLBACKS = {"lam": 1.0, "prior_uniform": 1.0}


def _merge_config(args):
    """flags > config file > fallback defaults, on the argparse namespace."""
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = json.load(fh)
    for key, val in cfg.items():
        key = key.replace("-", "_")
        if getattr(args, key, None) is None:
            setattr(args, key, val)
    for key, val in _FALLBACKS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, val)
    return args


def cmd_generate(args):
    out = _out_dir(args)
    try:
        spec = TopologySpec(n_nodes=args.nodes, n_links=args.links,
                            demand_lo=args.demand_lo, demand_hi=args.demand_hi,
                            seed=args.seed, noise_sigma=args.noise_sigma)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    inst = generate_network(spec)
    store_pattern(inst.A, os.path.join(out, "pattern.mtx"))
    _write_vector(os.path.join(out, "x_true.txt"), inst.x_true)
    _write_vector(os.path.join(out, "b.txt"), inst.b)
    with open(os.path.join(out, "instance.json"), "w") as fh:
        json.dump({"spec": asdict(spec), "m": inst.A.m, "n": inst.A.n,
                   "nnz": inst.A.nnz}, fh, indent=2)
    _write_manifest(out, "generate", vars(args))
    print("wrote pattern.mtx x_true.txt b.txt instance.json in %s" % out)
    return 0


def _load_instance_files(args):
    A = load_pattern(args.matrix)
    b = _read_vector(args.loads)
    if b.shape != (A.m,):
        raise CliError("loads file has %d entries, matrix has %d links" % (b.size, A.m))
    if args.prior is not None:
        x_g = _read_vector(args.prior)
        if x_g.shape != (A.n,):
            raise CliError("prior file has %d entries, matrix has %d demands"
                           % (x_g.size, A.n))
    else:
        x_g = np.full(A.n, float(args.prior_uniform))
    return A, b, x_g


def _solver_config(args):
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    for name in ("max_iters", "l_source", "relative_mode", "trace_stride"):
        val = getattr(args, name, None)
        if val is not None:
            kw[name] = val
    if getattr(args, "accuracy", None) is not None:
        kw["epsilon"] = args.accuracy
    return SolverConfig(**kw)


def _require_seed(args):
    if args.solver in solvers.RANDOMIZED and args.seed is None:
        raise CliError("solver %r is randomized: pass --seed (or set it in the "
                       "config file)" % args.solver)


def cmd_solve(args):
    out = _out_dir(args)
    if args.solver is None or args.reg is None:
        raise CliError("--solver and --reg are required (flags or config file)")
    A, b, x_g = _load_instance_files(args)
    try:
        solvers.check_supported(args.solver, args.reg)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    _require_seed(args)
    cfg = _solver_config(args)
    t0 = time.perf_counter()
    result = solvers.dispatch(args.solver, A, b, x_g, args.reg, args.lam, cfg,
                              eps=args.eps, eps_tilde=args.eps_tilde)
    wall = time.perf_counter() - t0
    report_path = os.path.join(out, args.report)
    raw = result.raw
    if hasattr(raw, "save"):
        raw.save(report_path)
    else:  # penalty continuation: list of steps
        with open(report_path, "w") as fh:
            json.dump([{"K": s.K, "x": s.x.tolist(), "y_est": s.y_est.tolist()}
                       for s in raw], fh)
    if args.trace_csv:
        with open(os.path.join(out, args.trace_csv), "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iter", "objective_or_cert"])
            trace = result.obj_trace or result.cert_trace
            for i, vv in enumerate(trace):
                wr.writerow([i, vv])
    _write_vector(os.path.join(out, "x_final.txt"), result.x)
    _write_manifest(out, "solve", vars(args))
    print("solver %s finished: %d iterations, %.3fs, report %s"
          % (args.solver, result.iters, wall, report_path))
    return 0


def cmd_tune_lambda(args):
    out = _out_dir(args)
    A, b, x_g = _load_instance_files(args)
    proj = ProjectionInstance(A, b, Regularizer.ridge(1.0, x_g))
    lo = args.lo if args.lo is not None else 1.0 / (100.0 * args.eps_slater)
    hi = args.hi if args.hi is not None else 100.0 / args.eps_slater ** 2
    cfg = _solver_config(args)
    res = tune_lambda(proj, args.eps_slater, (lo, hi), cfg)
    payload = {"lambda_bar": res.lambda_bar, "at_endpoint": res.at_endpoint,
               "evals": res.evals, "interval": [lo, hi]}
    with open(os.path.join(out, args.report), "w") as fh:
        json.dump(payload, fh, indent=2)
    _write_vector(os.path.join(out, "x_final.txt"), res.x)
    _write_manifest(out, "tune-lambda", vars(args))
    if res.at_endpoint:
        print("warning: maximizer at an interval endpoint; widen [lo, hi]",
              file=sys.stderr)
    print("lambda_bar %.6g (%d inner solves)" % (res.lambda_bar, res.evals))
    return 0


def cmd_bench(args):
    out = _out_dir(args)
    A, b, x_g = _load_instance_files(args)
    x_true = _read_vector(args.x_true) if args.x_true else None
    names = [s.strip() for s in args.solvers.split(",") if s.strip()]
    for name in names:
        if name not in solvers.SOLVERS:
            raise CliError("unknown solver %r" % name)
    if args.seed is None and any(s in solvers.RANDOMIZED for s in names):
        raise CliError("benchmark includes randomized solvers: pass --seed")
    applicable = [s for s in names if args.reg in solvers.SUPPORTED[s]]
    skipped = [s for s in names if s not in applicable]
    if skipped:
        print("skipping (not applicable to %s): %s" % (args.reg, ", ".join(skipped)),
              file=sys.stderr)
    cfg = _solver_config(args)
    from .model import ProblemInstance
    reg = solvers.make_regularizer(args.reg, args.lam, x_g=x_g)
    ref_inst = ProblemInstance(A, b, reg)
    rows = []
    for name in applicable:
        t0 = time.perf_counter()
        try:
            result = solvers.dispatch(name, A, b, x_g, args.reg, args.lam, cfg,
                                      eps=args.eps, eps_tilde=args.eps_tilde)
            wall = time.perf_counter() - t0
            final_f = ref_inst.objective(np.maximum(result.x, 0.0))
            lla = float(np.linalg.norm(A.matvec(result.x) - b) / np.linalg.norm(b))
            da = (float(np.linalg.norm(result.x - x_true) / np.linalg.norm(x_true))
                  if x_true is not None else "")
            rows.append([name, result.iters, result.flops, "%.6f" % wall,
                         "%.12g" % final_f, "%.6g" % lla,
                         "%.6g" % da if da != "" else "", ""])
        except Exception as exc:  # record the failure, keep the run going
            rows.append([name, "", "", "", "", "", "", str(exc)])
    table = os.path.join(out, args.report)
    with open(table, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["solver", "iters", "flops", "wall_time", "final_f",
                     "lla", "da", "error"])
        wr.writerows(rows)
    _write_manifest(out, "bench", vars(args))
    print("wrote %s (%d rows)" % (table, len(rows)))
    return 0


def cmd_eval(args):
    A = load_pattern(args.matrix)
    b = _read_vector(args.loads)
    x = _read_vector(args.x)
    lla = float(np.linalg.norm(A.matvec(x) - b) / np.linalg.norm(b))
    payload = {"lla": lla}
    if args.x_true:
        x_true = _read_vector(args.x_true)
        payload["da"] = float(np.linalg.norm(x - x_true) / np.linalg.norm(x_true))
    print(json.dumps(payload))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="tomosolve",
                                description="demand recovery from link loads")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic instance to disk")
    g.add_argument("--nodes", type=int, required=True)
    g.add_argument("--links", type=int, required=True)
    g.add_argument("--demand-lo", type=float, default=100.0)
    g.add_argument("--demand-hi", type=float, default=300.0)
    g.add_argument("--noise-sigma", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", default=None)
    g.set_defaults(fn=cmd_generate)

    def instance_flags(sp):
        sp.add_argument("--matrix", required=True, help="pattern file")
        sp.add_argument("--loads", required=True, help="per-link loads file")
        sp.add_argument("--prior", default=None, help="prior demands file")
        sp.add_argument("--prior-uniform", type=float, default=None,
                        help="flat prior value when no prior file is given")
        sp.add_argument("--config", default=None, help="JSON config file")
        sp.add_argument("--out-dir", default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--max-iters", type=int, default=None)
        sp.add_argument("--accuracy", type=float, default=None,
                        help="target objective gap for primal solvers")
        sp.add_argument("--l-source", default=None,
                        choices=["trace_bound", "power_estimate", "backtracking"])
        sp.add_argument("--relative-mode", action="store_const", const=True,
                        default=None)
        sp.add_argument("--trace-stride", type=int, default=None)

    s = sub.add_parser("solve", help="run one solver on an instance")
    instance_flags(s)
    s.add_argument("--solver", choices=list(solvers.SOLVERS))
    s.add_argument("--reg", choices=["ridge", "entropy", "lasso"])
    s.add_argument("--lam", type=float, default=None)
    s.add_argument("--eps", type=float, default=None,
                   help="certificate target for the projection solver")
    s.add_argument("--eps-tilde", type=float, default=None,
                   help="residual target for the projection solver")
    s.add_argument("--report", default="report.json")
    s.add_argument("--trace-csv", default=None)
    s.set_defaults(fn=cmd_solve)

    t = sub.add_parser("tune-lambda", help="golden-section multiplier search")
    instance_flags(t)
    t.add_argument("--eps-slater", type=float, required=True)
    t.add_argument("--lo", type=float, default=None)
    t.add_argument("--hi", type=float, default=None)
    t.add_argument("--report", default="tune.json")
    t.set_defaults(fn=cmd_tune_lambda)

    bsub = sub.add_parser("bench", help="compare solvers on one instance")
    instance_flags(bsub)
    bsub.add_argument("--solvers", required=True,
                      help="comma-separated solver names")
    bsub.add_argument("--reg", required=True, choices=["ridge", "entropy", "lasso"])
    bsub.add_argument("--lam", type=float, default=None)
    bsub.add_argument("--eps", type=float, default=None)
    bsub.add_argument("--eps-tilde", type=float, default=None)
    bsub.add_argument("--x-true", default=None)
    bsub.add_argument("--report", default="bench.csv")
    bsub.set_defaults(fn=cmd_bench)

    e = sub.add_parser("eval", help="score a solution file")
    e.add_argument("--matrix", required=True)
    e.add_argument("--loads", required=True)
    e.add_argument("--x", required=True)
    e.add_argument("--x-true", default=None)
    e.set_defaults(fn=cmd_eval)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _merge_config(args)
    try:
        return args.fn(args)
    except CliError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except (PatternFormatError, solvers.UnsupportedCombination, ValueError,
            OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except (NumericalFailure, RestartBudgetError, ProjectionBudgetError) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

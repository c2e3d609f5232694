"""Command-line interface: generate fixtures, solve instances, run sweeps."""

import argparse
import sys
import time

from .datasets import ENSEMBLE_KINDS, EnsembleSpec, generate_mmv, generate_smv
from .harness import (
    MMV_SOLVERS,
    SMV_SOLVERS,
    ExperimentPlan,
    _run_solver,
    format_summary,
    run_plan,
    summarize,
)
from .io import read_results_csv, save_problem
from .metrics import nmse_db, tnmse_db


def _add_problem_args(parser):
    parser.add_argument("--ensemble", choices=ENSEMBLE_KINDS, default="iid_gaussian")
    parser.add_argument("--param", type=float, default=0.0, help="ensemble parameter")
    parser.add_argument("--n", type=int, required=True, help="signal dimension")
    parser.add_argument("--m", type=int, required=True, help="measurements")
    parser.add_argument("--k", type=int, required=True, help="support size")
    parser.add_argument("--t", type=int, default=1, help="number of frames")
    parser.add_argument("--beta", type=float, default=0.0, help="lag-1 row correlation")
    parser.add_argument("--snr-db", type=float, default=60.0)
    parser.add_argument(
        "--seed", type=int, default=0,
        help="trial seed; matrix and signal streams are derived from it",
    )


def _make_problem(args):
    spec = EnsembleSpec(
        args.ensemble, args.m, args.n, parameter=args.param, seed=2 * args.seed
    )
    if args.t == 1:
        return generate_smv(spec, args.k, args.snr_db, 2 * args.seed + 1)
    return generate_mmv(spec, args.k, args.t, args.beta, args.snr_db, 2 * args.seed + 1)


def _cmd_gen(args):
    problem = _make_problem(args)
    save_problem(problem, args.out)
    kind = "smv" if args.t == 1 else "mmv"
    print(f"wrote {kind} problem (m={problem.m}, n={problem.n}, k={problem.k}) to {args.out}")
    return 0


def _cmd_solve(args):
    problem = _make_problem(args)
    opts = {}
    if args.theta is not None:
        opts["theta"] = args.theta
    if args.theta_msg is not None:
        opts["theta_msg"] = args.theta_msg
    if args.eps_gamp is not None:
        opts["eps_gamp"] = args.eps_gamp
    if args.eps_em is not None:
        opts["eps_em"] = args.eps_em
    if args.kmax is not None:
        opts["kmax"] = args.kmax
    if args.imax is not None:
        opts["imax"] = args.imax
    if args.sigma2_policy is not None:
        opts["sigma2_policy"] = args.sigma2_policy
    t0 = time.perf_counter()
    x_hat, em_iters, inner, converged = _run_solver(args.solver, problem, opts)
    elapsed = time.perf_counter() - t0
    if args.t == 1:
        err = nmse_db(x_hat, problem.x_true)
    else:
        err = tnmse_db(x_hat, problem.X_true)
    print(
        f"solver={args.solver} nmse_db={err:.3f} runtime_s={elapsed:.4f} "
        f"em_iters={em_iters} inner_iters={inner} converged={str(converged).lower()}"
    )
    return 0


def _cmd_sweep(args):
    plan = ExperimentPlan.from_file(args.plan)
    if args.out is not None:
        plan.output = args.out
    records = run_plan(plan, workers=args.workers)
    if plan.output:
        print(f"wrote {len(records)} records to {plan.output}")
    print(format_summary(summarize(records)))
    return 0


def _cmd_report(args):
    records = read_results_csv(args.results)
    print(format_summary(summarize(records)))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gampsbl",
        description="Sparse Bayesian learning benchmarks with message-passing solvers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a problem fixture directory")
    _add_problem_args(p_gen)
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.set_defaults(func=_cmd_gen)

    p_solve = sub.add_parser("solve", help="solve one generated instance")
    _add_problem_args(p_solve)
    p_solve.add_argument(
        "--solver", required=True, choices=sorted(set(SMV_SOLVERS + MMV_SOLVERS) - {"noop"})
    )
    p_solve.add_argument("--theta", type=float, default=None, help="damping factor")
    p_solve.add_argument(
        "--theta-msg", type=float, default=None,
        help="chain-message damping factor (multi-frame solver)",
    )
    p_solve.add_argument("--eps-gamp", type=float, default=None)
    p_solve.add_argument("--eps-em", type=float, default=None)
    p_solve.add_argument("--kmax", type=int, default=None)
    p_solve.add_argument("--imax", type=int, default=None)
    p_solve.add_argument("--sigma2-policy", choices=("fixed", "em"), default=None)
    p_solve.set_defaults(func=_cmd_solve)

    p_sweep = sub.add_parser("sweep", help="run an experiment plan")
    p_sweep.add_argument("plan", help="YAML plan file")
    p_sweep.add_argument("--out", default=None, help="override the plan's output CSV")
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_report = sub.add_parser("report", help="summarize a results CSV")
    p_report.add_argument("results", help="results CSV from a sweep")
    p_report.set_defaults(func=_cmd_report)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

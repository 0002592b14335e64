"""Command-line front end.

Subcommands: solve (write a certified solution bundle), check (recompute
residuals on a stored bundle), converge (partition-refinement sweep with
a report CSV), catalog (list built-in problems).

Exit codes, fixed for scripting: 0 success, 1 usage or malformed input,
2 solver failure, 3 certification/threshold failure, 4 reference
rejection.  All numeric output uses locale-independent decimal
formatting, and identical invocations produce byte-identical files.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import convergence_harness as harness
from .control_partition import Partition, read_control_csv
from .errors import (ConfigFormatError, IntegrationDivergedError, OracleError,
                     ProblemLookupError, SampledOcpError, SolverError,
                     SurrogateRejectedError)
from .integrate import CostateTrajectory, read_costate_csv, read_state_csv
from .pmp_check import Extremal, evaluate_extremal
from .problem_model import OcpProblem, build_problem, catalog, load_problem_config
from .reference_oracles import fine_surrogate, solve_lq_permanent
from .solver_sampled import SolverOptions, solve, write_solution_bundle

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_CERTIFICATION = 3
EXIT_REFERENCE = 4

OUTPUT_ROOT_ENV = "SAMPLED_OCP_OUT"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="sampled-ocp", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def add_problem_flags(p):
        p.add_argument("--problem", help="catalog problem name")
        p.add_argument("--config", help="problem configuration file (JSON)")
        p.add_argument("--out", help="output directory")

    p_solve = sub.add_parser("solve", help="solve on one partition")
    add_problem_flags(p_solve)
    p_solve.add_argument("--N", type=int, help="uniform partition intervals")
    p_solve.add_argument("--times-file", help="file with explicit sampling times")
    p_solve.add_argument("--feas-tol", type=float)
    p_solve.add_argument("--stat-tol", type=float)
    p_solve.add_argument("--h-max", type=float)
    p_solve.add_argument("--max-outer", type=int)
    p_solve.add_argument("--max-inner", type=int)

    p_check = sub.add_parser("check", help="recompute residuals on a bundle")
    p_check.add_argument("bundle", help="bundle directory with the CSV files")
    add_problem_flags(p_check)
    p_check.add_argument("--require-hm", action="store_true",
                         help="also gate on the pointwise maximization gap")
    p_check.add_argument("--p0", type=float, default=None,
                         help="override the abnormality scalar from the file")
    p_check.add_argument("--probes", type=int, default=20)

    p_conv = sub.add_parser("converge", help="partition-refinement sweep")
    add_problem_flags(p_conv)
    p_conv.add_argument("--Ns", help="comma-separated resolutions, e.g. 2,4,8")
    p_conv.add_argument("--jobs", type=int, default=1,
                        help="max concurrent rows (cold starts only)")
    p_conv.add_argument("--warm-start", choices=("cascade", "cold"),
                        default="cascade")
    p_conv.add_argument("--feas-tol", type=float)
    p_conv.add_argument("--stat-tol", type=float)
    p_conv.add_argument("--h-max", type=float)
    p_conv.add_argument("--surrogate-N", type=int, default=256,
                        help="resolution of the fine-partition surrogate")
    p_conv.add_argument("--reference-reject-above", type=float, default=None,
                        help="reject the surrogate when its error bar exceeds this")

    sub.add_parser("catalog", help="list built-in problems")
    return parser


def _load_problem(args) -> OcpProblem:
    if bool(args.problem) == bool(args.config):
        raise _UsageError("exactly one of --problem or --config is required")
    if args.problem:
        return build_problem(args.problem)
    return load_problem_config(args.config)


def _output_dir(args, default_name: str) -> str:
    if args.out:
        out = args.out
    else:
        root = os.environ.get(OUTPUT_ROOT_ENV, ".")
        out = os.path.join(root, default_name)
    os.makedirs(out, exist_ok=True)
    return out


def _partition_from_args(args, horizon: float) -> Partition:
    from .control_partition import uniform_partition
    if bool(args.N) == bool(args.times_file):
        raise _UsageError("exactly one of --N or --times-file is required")
    if args.N:
        if args.N < 1:
            raise _UsageError("--N must be at least 1")
        return uniform_partition(args.N, horizon)
    try:
        with open(args.times_file, "r", encoding="utf-8") as fh:
            times = [float(line.strip()) for line in fh if line.strip()]
        return Partition(np.asarray(times))
    except (OSError, ValueError) as exc:
        raise _UsageError(f"--times-file: {exc}")


def _solver_options(args) -> SolverOptions:
    kwargs = {}
    if getattr(args, "feas_tol", None) is not None:
        kwargs["feas_tol"] = args.feas_tol
    if getattr(args, "stat_tol", None) is not None:
        kwargs["stat_tol"] = args.stat_tol
    if getattr(args, "h_max", None) is not None:
        kwargs["h_max"] = args.h_max
    if getattr(args, "max_outer", None) is not None:
        kwargs["max_outer"] = args.max_outer
    if getattr(args, "max_inner", None) is not None:
        kwargs["max_inner"] = args.max_inner
    return SolverOptions(**kwargs)


def run_solve(args) -> int:
    prob = _load_problem(args)
    partition = _partition_from_args(args, prob.horizon)
    opts = _solver_options(args)
    out = _output_dir(args, "solution")
    try:
        sol = solve(prob, partition, opts)
    except (SolverError, IntegrationDivergedError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_solution_bundle(out, prob, sol)
    report = sol.residuals
    print(report.to_json())
    print(f"bundle written to {out}")
    ok = (report.ae_residual is not None and report.ae_residual <= 1e-6
          and report.ahg_sup is not None and report.ahg_sup <= 1e-5)
    if not ok:
        print("certification failed: adjoint or averaged-gradient residual "
              "above threshold", file=sys.stderr)
        return EXIT_CERTIFICATION
    return EXIT_OK


def run_check(args) -> int:
    prob = _load_problem(args)
    bundle = args.bundle
    try:
        control = read_control_csv(os.path.join(bundle, "control.csv"))
        traj = read_state_csv(os.path.join(bundle, "state.csv"), prob, control)
        times, P, p0_file = read_costate_csv(os.path.join(bundle, "costate.csv"))
    except (OSError, ValueError) as exc:
        print(f"malformed bundle: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if times.shape != traj.grid.times.shape or \
            not np.array_equal(times, traj.grid.times):
        print("malformed bundle: state and costate grids differ", file=sys.stderr)
        return EXIT_USAGE
    p0 = p0_file if args.p0 is None else float(args.p0)
    n = P.shape[1]
    costate = CostateTrajectory(traj.grid, P, p0,
                                np.zeros((traj.grid.K, n)),
                                np.zeros((times.size, n)))
    extremal = Extremal(prob, traj, control, costate, p0)
    try:
        report = evaluate_extremal(extremal, with_hm=args.require_hm,
                                   lift_probes=max(0, args.probes),
                                   probe_seed=0)
    except SampledOcpError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATION
    except ValueError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATION
    print(report.to_json())
    return EXIT_OK if report.all_pass() else EXIT_CERTIFICATION


def _reference_for(prob: OcpProblem, args, max_n: int):
    if prob.lq is not None:
        return solve_lq_permanent(prob.lq)
    return fine_surrogate(prob, args.surrogate_N,
                          reject_above=args.reference_reject_above,
                          sweep_max_n=max_n)


def run_converge(args) -> int:
    prob = _load_problem(args)
    if args.Ns:
        try:
            ns = tuple(int(tok) for tok in args.Ns.split(","))
        except ValueError as exc:
            raise _UsageError(f"--Ns: {exc}")
    else:
        ns = (2, 4, 8, 16, 32, 64)
    out = _output_dir(args, "report")
    try:
        reference = _reference_for(prob, args, max(ns))
    except (SurrogateRejectedError, OracleError) as exc:
        print(f"reference rejected: {exc}", file=sys.stderr)
        return EXIT_REFERENCE
    opts_kwargs = {}
    if args.feas_tol is not None:
        opts_kwargs["feas_tol"] = args.feas_tol
    if args.stat_tol is not None:
        opts_kwargs["stat_tol"] = args.stat_tol
    if args.h_max is not None:
        opts_kwargs["h_max"] = args.h_max
    solver_opts = SolverOptions(feas_tol=1e-9, **opts_kwargs) \
        if "feas_tol" not in opts_kwargs else SolverOptions(**opts_kwargs)
    cfg = harness.SweepConfig(problem=prob, reference=reference,
                              resolutions=ns,
                              warm_start_policy=args.warm_start,
                              solver_options=solver_opts)
    report = harness.sweep(cfg, jobs=max(1, args.jobs))
    csv_path = os.path.join(out, "report.csv")
    summary_path = os.path.join(out, "summary")
    harness.write_report(csv_path, summary_path, report)
    print(report.to_csv(), end="")
    print(report.summary_json())
    print(f"report written to {csv_path}")
    if any(f.get("error") != "certification" for f in report.failures):
        return EXIT_SOLVER
    return EXIT_OK if report.all_pass() else EXIT_CERTIFICATION


def run_catalog(_args) -> int:
    for entry in catalog():
        print(f"{entry.name:24s} reference={entry.reference_kind:26s} "
              f"{entry.summary}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("a subcommand is required "
                              "(solve, check, converge, catalog)")
        if args.command == "solve":
            return run_solve(args)
        if args.command == "check":
            return run_check(args)
        if args.command == "converge":
            return run_converge(args)
        if args.command == "catalog":
            return run_catalog(args)
        raise _UsageError(f"unknown command {args.command!r}")
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigFormatError, ProblemLookupError) as exc:
        print(f"bad problem specification: {exc}", file=sys.stderr)
        return EXIT_USAGE


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()

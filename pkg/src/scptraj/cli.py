"""Command line front end.

Verbs:
  solve <scenario> [--init traj.csv] [--out dir]   solve one scenario
  batch <batchspec> [--jobs K] [--out dir]         randomized batch
  check <traj> <scenario>                          recompute metrics
  dump-locp <scenario> --iter K [--out dir]        emit one subproblem

Exit codes: 0 on success, 2 when a run finishes but does not reach a
usable solution (or a checked trajectory fails its tolerances), 1 on
errors such as unreadable files or schema violations.  Progress and
diagnostics go to stderr; results land in the output directory, which
defaults to $SCPTRAJ_OUT_DIR, then the working directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backend import dump_program
from .runner import (OUT_DIR_ENV, default_out_dir, load_batch_spec,
                     load_trajectory, run_batch, run_single,
                     trajectory_metrics)
from .scenario import (ScenarioError, build_problem, build_scp_params,
                       initial_trajectory, load_scenario)
from .scp import solve_ocp
from .transcription import LocpSpec, build_locp

logger = logging.getLogger("scptraj")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNSOLVED = 2


def _progress(record):
    ratio = "-" if record.ratio is None else f"{record.ratio:.3g}"
    logger.info("k=%-3d trust=%-10.4g penalty=%-8.3g ratio=%-8s %s "
                "cost=%.6g violation=%.3g",
                record.k, record.trust, record.penalty, ratio,
                "accept" if record.accepted else "reject",
                record.cost, record.violation)


def _cmd_solve(args) -> int:
    scenario = load_scenario(args.scenario)
    init = None
    if args.init is not None:
        init = load_trajectory(args.init)
    out = Path(args.out) if args.out else default_out_dir()
    report, _ = run_single(scenario, init=init, out_dir=out,
                           observer=_progress,
                           use_shooting=False if args.no_shooting else None)
    logger.info("wrote %s and %s", out / f"{scenario.name}.traj.csv",
                out / f"{scenario.name}.report.json")
    print(json.dumps({k: report.to_dict()[k] for k in
                      ("scenario", "case", "success", "cost", "iterations",
                       "accelerated", "max_violation", "wall_time")},
                     indent=2))
    return EXIT_OK if report.success else EXIT_UNSOLVED


def _cmd_batch(args) -> int:
    spec = load_batch_spec(args.batchspec)
    out = Path(args.out) if args.out else default_out_dir()
    result = run_batch(spec, out_dir=out, jobs=args.jobs)
    agg = result["aggregate"]
    logger.info("wrote %s", out / f"{spec.base.name}.batch.json")
    print(json.dumps(agg, indent=2))
    return EXIT_OK if agg["successes"] == agg["runs"] else EXIT_UNSOLVED


def _cmd_check(args) -> int:
    scenario = load_scenario(args.scenario)
    problem = build_problem(scenario)
    params = build_scp_params(scenario)
    traj = load_trajectory(args.traj)
    if traj.X.shape[1] != problem.n or traj.U.shape[1] != problem.m:
        raise ScenarioError(
            f"trajectory dimensions ({traj.X.shape[1]}, {traj.U.shape[1]}) "
            f"disagree with the scenario model ({problem.n}, {problem.m})")
    metrics = trajectory_metrics(problem, traj)
    ok = metrics["max_violation"] <= params.violation_tol \
        and metrics["goal_distance"] <= params.resolved_conv_tol(problem)
    metrics["pass"] = ok
    print(json.dumps(metrics, indent=2))
    return EXIT_OK if ok else EXIT_UNSOLVED


def _cmd_dump_locp(args) -> int:
    scenario = load_scenario(args.scenario)
    problem = build_problem(scenario)
    params = build_scp_params(scenario)
    init = initial_trajectory(scenario, problem)
    history = []
    solve_ocp(problem, init, params, shooting=None, observer=history.append)
    if args.iter >= len(history):
        logger.error("iteration %d not reached; the run recorded %d step(s)",
                     args.iter, len(history))
        return EXIT_ERROR
    prev = init
    for record in history:
        if record.k == args.iter:
            break
        if record.accepted:
            prev = record.trajectory
    spec = LocpSpec(problem=problem, prev=prev, delta=record.trust,
                    omega=record.penalty,
                    slack_weight=params.resolved_slack_weight(record.penalty),
                    sigma_trust=params.resolved_time_trust(problem),
                    cone_support=params.solver.cone_support)
    program, _ = build_locp(spec)
    out = Path(args.out) if args.out else default_out_dir()
    out = out / f"{scenario.name}-locp-{args.iter:03d}"
    written = dump_program(program, out)
    for path in written:
        logger.info("wrote %s", path)
    print(str(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scptraj",
        description="Trust-region sequential convex trajectory optimization")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="more stderr logging (-v info, -vv debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one scenario")
    p.add_argument("scenario", help="scenario file or built-in name")
    p.add_argument("--init", help="warm-start trajectory CSV")
    p.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV} or .)")
    p.add_argument("--no-shooting", action="store_true",
                   help="skip the indirect acceleration stage")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("batch", help="run a randomized batch")
    p.add_argument("batchspec", help="batch spec file")
    p.add_argument("--jobs", type=int, default=None,
                   help="process pool size (default: from the spec)")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_batch)

    p = sub.add_parser("check", help="recompute metrics for a saved trajectory")
    p.add_argument("traj", help="trajectory CSV")
    p.add_argument("scenario", help="scenario file or built-in name")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("dump-locp", help="emit one convex subproblem to files")
    p.add_argument("scenario", help="scenario file or built-in name")
    p.add_argument("--iter", type=int, required=True,
                   help="outer-loop step whose subproblem to dump")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_dump_locp)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

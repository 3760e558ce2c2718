"""Command-line entry points: solve, simulate, and sweep.

Exit codes: 0 success, 2 configuration or input-schema error, 3 solver
non-convergence, 4 audit failure.  Every output file is written atomically
(temp file plus rename) and report.json records the fully resolved
configuration, so a run can be reproduced bit for bit.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .audit import run_audit
from .config import ConfigError, RunConfig, build_run_config, load_run_config
from .ocp import (
    Trajectory,
    TrajectorySchemaError,
    _write_text_atomic,
    build_nlp,
    extract_trajectory,
    initial_guess,
)
from .solver import check_kkt, solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_AUDIT = 4

REPORT_SCHEMA = "traymotion-report-v1"
ACTIVE_TOL = 1e-3


def _jsonsafe(obj):
    """Recursively convert to JSON-serializable values; non-finite floats
    become strings so the report stays standard JSON."""
    if isinstance(obj, dict):
        return {str(k): _jsonsafe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonsafe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonsafe(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_json_atomic(path: str, payload: dict) -> None:
    _write_text_atomic(path, json.dumps(_jsonsafe(payload), indent=2, sort_keys=True) + "\n")


def _active_inequalities(nlp, solution) -> dict:
    """Activity summary: nonlinear rows and variable bounds within the
    activity tolerance (pinned variables excluded)."""
    ev = nlp.evaluate(solution.z, want_jacobians=False)
    names = nlp.inequality_row_names()
    active_rows = [
        {"name": names[i], "residual": float(ev.c_ineq[i])}
        for i in np.flatnonzero(np.abs(ev.c_ineq) <= ACTIVE_TOL)
    ]
    z = solution.z
    pinned = nlp.upper - nlp.lower <= 0.0
    near_low = np.isfinite(nlp.lower) & (np.abs(z - nlp.lower) <= ACTIVE_TOL) & ~pinned
    near_up = np.isfinite(nlp.upper) & (np.abs(nlp.upper - z) <= ACTIVE_TOL) & ~pinned
    n_bounds = int(np.count_nonzero(near_low | near_up))
    return {
        "row_count": len(active_rows),
        "bound_count": n_bounds,
        "total": len(active_rows) + n_bounds,
        "rows": active_rows[:20],
    }


def solve_pipeline(runcfg: RunConfig, out_dir: str) -> tuple[int, dict]:
    """initial guess -> NLP -> solve -> extract -> audit -> artifacts."""
    os.makedirs(out_dir, exist_ok=True)
    nlp = build_nlp(runcfg.ocp, runcfg.models)
    z0 = initial_guess(runcfg.ocp, runcfg.models)
    solution = solve(nlp, z0, runcfg.solver)
    trajectory = extract_trajectory(solution, runcfg.ocp, runcfg.models)
    audit_report, gates = run_audit(trajectory, runcfg.models, runcfg.audit)
    kkt = check_kkt(nlp, solution.z, solution.multipliers_eq, solution.multipliers_ineq,
                    runcfg.solver.kkt_tolerance)

    report = {
        "schema": REPORT_SCHEMA,
        "config": runcfg.resolved,
        "problem": {
            "variables": nlp.n,
            "defect_constraints": nlp.n_defects,
            "inequality_rows": nlp.n_ineq,
            "shooting_intervals": nlp.n_intervals,
        },
        "solver": {
            "status": solution.status.value,
            "message": solution.message,
            "objective": solution.objective,
            "t_total_s": float(solution.z[0]),
            "kkt_residual": solution.kkt_residual,
            "constraint_violation": solution.constraint_violation,
            "outer_iterations": solution.iterations,
            "inner_iterations": solution.inner_iterations,
            "kkt": kkt.to_dict(),
            "active_inequalities": _active_inequalities(nlp, solution),
            "history": [
                {
                    "index": rec.index,
                    "objective": rec.objective,
                    "merit_start": rec.merit_start,
                    "merit_end": rec.merit_end,
                    "violation": rec.violation,
                    "kkt_residual": rec.kkt_residual,
                    "penalty": rec.penalty,
                    "inner_iterations": rec.inner_iterations,
                }
                for rec in solution.history
            ],
        },
        "audit": audit_report.to_dict(gates),
    }

    trajectory.to_csv(os.path.join(out_dir, "trajectory.csv"))
    audit_report.write_samples_csv(os.path.join(out_dir, "audit.csv"))
    write_json_atomic(os.path.join(out_dir, "report.json"), report)

    if not solution.converged:
        return EXIT_SOLVER, report
    if not audit_report.passed(gates):
        return EXIT_AUDIT, report
    return EXIT_OK, report


def cmd_solve(args) -> int:
    try:
        runcfg = load_run_config(args.config, args.set or [], args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, report = solve_pipeline(runcfg, runcfg.output_dir)
    status = report["solver"]["status"]
    t_total = report["solver"]["t_total_s"]
    print(f"solve: status={status} t_total={t_total:.6f}s exit={code}")
    return code


def cmd_simulate(args) -> int:
    try:
        runcfg = load_run_config(args.config, args.set or [], args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        trajectory = Trajectory.from_csv(args.traj)
    except (TrajectorySchemaError, OSError) as exc:
        print(f"trajectory error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = runcfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    audit_report, gates = run_audit(trajectory, runcfg.models, runcfg.audit)
    report = {
        "schema": REPORT_SCHEMA,
        "config": runcfg.resolved,
        "trajectory_file": args.traj,
        "audit": audit_report.to_dict(gates),
    }
    audit_report.write_samples_csv(os.path.join(out_dir, "audit.csv"))
    write_json_atomic(os.path.join(out_dir, "report.json"), report)
    passed = audit_report.passed(gates)
    print(f"simulate: audit {'passed' if passed else 'FAILED'}")
    return EXIT_OK if passed else EXIT_AUDIT


def _sweep_one(resolved: dict, param: str, value, out_dir: str) -> tuple[int, float, str]:
    """One sweep member; isolated so it can run in a worker process."""
    from .config import apply_override

    member = json.loads(json.dumps(resolved))  # deep copy via plain data
    apply_override(member, f"{param}={value!r}" if isinstance(value, str) else f"{param}={value}")
    runcfg = build_run_config(member)
    code, report = solve_pipeline(runcfg, out_dir)
    return code, report["solver"]["t_total_s"], report["solver"]["status"]


def cmd_sweep(args) -> int:
    try:
        runcfg = load_run_config(args.config, args.set or [], args.out)
        values = []
        import yaml as _yaml

        for tok in args.values.split(","):
            values.append(_yaml.safe_load(tok))
        # validate the parameter name before launching runs
        probe = json.loads(json.dumps(runcfg.resolved))
        from .config import apply_override

        apply_override(probe, f"{args.param}={values[0]}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_root = runcfg.output_dir
    os.makedirs(out_root, exist_ok=True)
    tasks = [
        (runcfg.resolved, args.param, v, os.path.join(out_root, f"{args.param.replace('.', '_')}_{i}"))
        for i, v in enumerate(values)
    ]
    rows = []
    if args.parallel and args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            futures = [pool.submit(_sweep_one, *t) for t in tasks]
            results = [f.result() for f in futures]
    else:
        results = [_sweep_one(*t) for t in tasks]
    worst = EXIT_OK
    for value, (code, t_total, status) in zip(values, results):
        rows.append(f"{value},{t_total:.17g},{status}")
        worst = max(worst, code)
        print(f"sweep {args.param}={value}: status={status} t_total={t_total:.6f}s exit={code}")
    _write_text_atomic(
        os.path.join(out_root, "sweep.csv"),
        "\n".join([f"# traymotion-sweep-v1 param={args.param}", "value,t_total_s,status"] + rows) + "\n",
    )
    return worst


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="traymotion",
        description="Time-optimal tray transport of a liquid-filled cup along a prescribed path.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config value (repeatable)")
        p.add_argument("--out", default=None, help="output directory (overrides config)")

    p_solve = sub.add_parser("solve", help="optimize and audit a trajectory")
    common(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_sim = sub.add_parser("simulate", help="audit an externally supplied trajectory CSV")
    common(p_sim)
    p_sim.add_argument("--traj", required=True, help="trajectory CSV to audit")
    p_sim.set_defaults(func=cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="repeat solve over a list of config values")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True, help="dotted config key to vary")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--parallel", type=int, default=0,
                         help="run sweep members in this many worker processes")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

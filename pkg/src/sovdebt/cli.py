"""Command-line workflows: solve, verify, simulate, classify, bounds, sweep.

Every command reads an INI run configuration and writes deterministic JSON
and CSV artifacts (byte-identical across reruns with the same inputs;
wall-clock metadata goes to a run_meta.json side file).  Exit codes:
0 success, 1 input or configuration error, 2 numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, montecarlo
from .config import ConfigError, build_run_config, load_config, load_raw
from .solver import (ContinuationTrace, NonConvergence, InstabilityDetected,
                     SolverConfig, continuation_solve, load_solution,
                     save_solution)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2
EXIT_VERIFICATION = 3


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _sanitize(obj):
    """Replace non-finite floats so artifacts stay strict JSON."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return "divergent" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


def _write_json(payload, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_sanitize(payload), sort_keys=True, indent=2,
                      default=_json_default)
    path.write_text(text + "\n", encoding="utf-8")


def _write_meta(out_dir, command):
    _write_json({"command": command, "written_at": time.time()},
                out_dir / "run_meta.json")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args) -> int:
    try:
        raw = load_raw(args.config)
        if args.n is not None:
            raw.setdefault("solver", {})["n"] = str(args.n)
        run = build_run_config(raw, path=args.config)
        solver_cfg = run.solver
        if args.eps_final is not None:
            kept = tuple(e for e in solver_cfg.epsilon_schedule
                         if e > args.eps_final) + (args.eps_final,)
            solver_cfg = SolverConfig(
                n=solver_cfg.n, epsilon_schedule=kept,
                pseudo_time_safety=solver_cfg.pseudo_time_safety,
                steady_state_tol=solver_cfg.steady_state_tol,
                max_iterations=solver_cfg.max_iterations,
                policy_iteration=solver_cfg.policy_iteration,
                howard_threshold=solver_cfg.howard_threshold,
                max_explicit_steps=solver_cfg.max_explicit_steps)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    out = _out_dir(args)
    code = EXIT_OK
    trace = ContinuationTrace()
    try:
        solution, trace = continuation_solve(run.params, run.costs, run.risk,
                                             run.salvage, solver_cfg)
    except NonConvergence as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        solution, code = exc.solution, EXIT_NUMERICAL
    except InstabilityDetected as exc:
        print(f"solver instability: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    save_solution(solution, out / "solution.csv")
    _write_json({"trace": trace.to_dict(),
                 "converged": solution.converged,
                 "residual_max": solution.residual_max,
                 "epsilon_final": solution.epsilon},
                out / "trace.json")
    _write_meta(out, "solve")
    print(f"wrote {out / 'solution.csv'} (converged={solution.converged}, "
          f"residual={solution.residual_max:.3e})")
    return code


def cmd_verify(args) -> int:
    try:
        run = load_config(args.config)
        solution = load_solution(args.solution)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if solution.params.to_dict() != run.params.to_dict():
        print("error: solution and config disagree on model parameters: "
              f"{solution.params.to_dict()} vs {run.params.to_dict()}",
              file=sys.stderr)
        return EXIT_INPUT

    report = analysis.verify_solution(solution, run.params, run.costs,
                                      run.risk, run.salvage,
                                      steady_tol=run.solver.steady_state_tol)
    out = _out_dir(args)
    _write_json(report.to_dict(), out / "verification.json")
    _write_meta(out, "verify")
    for item in report.items:
        status = ("skip" if item.passed is None
                  else "pass" if item.passed else "FAIL")
        print(f"{status:4s}  {item.name}" + (f"  ({item.note})" if item.note
                                             else ""))
    return EXIT_OK if report.passed else EXIT_VERIFICATION


def cmd_simulate(args) -> int:
    try:
        run = load_config(args.config)
        solution = load_solution(args.solution)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    feedback = montecarlo.FeedbackPolicy.from_solution(solution)
    x0 = args.x0 if args.x0 is not None else run.sim.x0
    try:
        est_J, est_p = montecarlo.estimate_both(
            x0, feedback, run.params, run.costs, run.risk, run.salvage,
            run.sim)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    payload = {"x0": x0, "seed": run.sim.seed, "dt": run.sim.dt,
               "n_paths": run.sim.n_paths,
               "value": est_J.to_dict(), "bond": est_p.to_dict(),
               "pde_value": float(np.interp(x0, solution.grid.nodes,
                                            solution.V)),
               "pde_bond": float(np.interp(x0, solution.grid.nodes,
                                           solution.p))}
    if args.ks_exp_rate is not None:
        cols = montecarlo.simulate_paths(x0, feedback, run.params, run.costs,
                                         run.risk, run.salvage, run.sim)
        stat, pval = montecarlo.bankruptcy_times_ks(
            cols["bankruptcy_time"][cols["cause"] != 2], args.ks_exp_rate)
        payload["ks"] = {"rate": args.ks_exp_rate, "statistic": stat,
                         "pvalue": pval}
    out = _out_dir(args)
    _write_json(payload, out / "simulation.json")
    _write_meta(out, "simulate")
    print(f"J({x0}) = {est_J.mean:.6g} +- {est_J.standard_error:.2g}, "
          f"p({x0}) = {est_p.mean:.6g} +- {est_p.standard_error:.2g}")
    return EXIT_OK


def cmd_classify(args) -> int:
    try:
        run = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    regime = analysis.classify_regime(run.params, run.costs, run.risk,
                                      run.salvage)
    out = _out_dir(args)
    _write_json(regime.to_dict(), out / "classification.json")
    _write_meta(out, "classify")
    print(regime.label)
    return EXIT_OK


def cmd_bounds(args) -> int:
    try:
        run = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = analysis.compute_constants(run.params, run.costs, run.risk,
                                        run.salvage)
    out = _out_dir(args)
    _write_json(report.to_dict(), out / "bounds.json")
    _write_meta(out, "bounds")
    for key, val in report.to_dict().items():
        print(f"{key} = {val}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        raw = load_raw(args.config)
        section, _, key = args.param.partition(".")
        if section not in raw or not key:
            raise ConfigError(f"sweep parameter {args.param!r} must be "
                              f"section.key of an existing section")
        values = [float(tok) for tok in args.values.split(",") if tok.strip()]
        if not values:
            raise ConfigError("sweep needs at least one value")
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    out = _out_dir(args)
    index = []
    any_failed = False
    for i, value in enumerate(values):
        point_raw = {sec: dict(kv) for sec, kv in raw.items()}
        point_raw[section][key] = repr(value)
        point_dir = out / f"point_{i:02d}"
        point_dir.mkdir(parents=True, exist_ok=True)
        entry = {"index": i, "param": args.param, "value": value,
                 "dir": point_dir.name}
        try:
            run = build_run_config(point_raw, path=args.config)
            regime = analysis.classify_regime(run.params, run.costs, run.risk,
                                              run.salvage)
            solution, trace = continuation_solve(run.params, run.costs,
                                                 run.risk, run.salvage,
                                                 run.solver)
            save_solution(solution, point_dir / "solution.csv")
            _write_json(trace.to_dict(), point_dir / "trace.json")
            _write_json(regime.to_dict(), point_dir / "classification.json")
            entry.update(label=regime.label, converged=True,
                         solution="solution.csv")
        except ConfigError as exc:
            entry.update(error=str(exc), converged=False)
            any_failed = True
        except (NonConvergence, InstabilityDetected) as exc:
            entry.update(error=str(exc), converged=False)
            if isinstance(exc, NonConvergence) and exc.solution is not None:
                save_solution(exc.solution, point_dir / "solution.csv")
                entry["solution"] = "solution.csv"
            any_failed = True
        index.append(entry)
        label = entry.get("label", "failed")
        print(f"point {i}: {args.param} = {value} -> {label}")
    _write_json({"param": args.param, "points": index}, out / "sweep_index.json")
    _write_meta(out, "sweep")
    return EXIT_NUMERICAL if any_failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sovdebt",
        description="Debt management with bankruptcy risk: solve the coupled "
                    "value/bond system, verify bound certificates, simulate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the eps-continuation solver")
    p.add_argument("config")
    p.add_argument("--n", type=int, default=None, help="grid nodes override")
    p.add_argument("--eps-final", type=float, default=None,
                   help="smallest eps of the continuation schedule")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="check a solution against certificates")
    p.add_argument("solution")
    p.add_argument("config")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="Monte Carlo cross-validation")
    p.add_argument("config")
    p.add_argument("--solution", required=True)
    p.add_argument("--x0", type=float, default=None)
    p.add_argument("--ks-exp-rate", type=float, default=None,
                   help="also KS-test bankruptcy times against Exp(rate)")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("classify", help="near-threshold regime dichotomy")
    p.add_argument("config")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("bounds", help="certified constants report")
    p.add_argument("config")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("sweep", help="solve+classify along a parameter axis")
    p.add_argument("config")
    p.add_argument("--param", required=True, help="section.key, e.g. risk.q")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

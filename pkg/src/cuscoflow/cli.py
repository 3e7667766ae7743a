"""Command-line entry point: ``mf simulate|check-invariance|check-lyapunov|sweep``.

Exit codes: 0 pass/complete, 1 criterion violated or falsified, 2 error or
inconclusive certificate.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .integrator import IntegrationError, growth_bound, integrate
from .invariance import CriterionVariant, certify_strong, certify_weak
from .lyapunov import certify_lyapunov, verify_along_trajectory
from .reporting import FAIL, PASS, dumps
from .scenario import Scenario, ScenarioError, load_scenario, parse_body

log = logging.getLogger("cuscoflow")

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _verdict_code(verdict: str) -> int:
    return {PASS: EXIT_OK, FAIL: EXIT_FAIL}.get(verdict, EXIT_ERROR)


def cmd_simulate(sc: Scenario, out: Path, args) -> int:
    cfg = sc.integrator_config()
    x0 = sc.initial_state()
    code = EXIT_OK
    error = None
    try:
        traj = integrate(sc.operator, sc.cusco, cfg, x0)
    except IntegrationError as exc:
        if exc.partial is None:
            raise
        traj, error, code = exc.partial, str(exc), EXIT_ERROR
    _write(out / "trajectory.csv", traj.to_csv())
    summary = {
        "scenario": sc.name, "h": cfg.h, "T": cfg.T, "steps": len(traj.times) - 1,
        "x0": x0, "final": traj.final, "seed": sc.seed, "error": error,
        "max_displacement": float(np.max(np.linalg.norm(traj.states - x0, axis=1))),
    }
    if traj.selection_constant is not None and sc.operator.in_domain(x0):
        c = max(traj.selection_constant, 1e-12)
        summary["growth_bound_final"] = growth_bound(sc.cusco, sc.operator, x0, c, float(traj.times[-1]))
    if sc.set is not None:
        summary["max_distance_to_set"] = float(max(sc.set.distance(s) for s in traj.states))
    _write(out / "summary.json", dumps(summary))
    return code


def cmd_check_invariance(sc: Scenario, out: Path, args) -> int:
    if sc.set is None:
        raise ScenarioError([("set", "check-invariance needs a set")])
    variant = CriterionVariant.parse(args.variant or sc.check.get("variant", "normal-inf"))
    tol = args.tol if args.tol is not None else sc.check.get("tol")
    sampler = sc.make_sampler(args.seed)
    if variant.weak:
        rep = certify_weak(sc.set, sc.operator, sc.cusco, variant, sampler, tol,
                           m=sc.sampler.get("m"), scenario=sc.name)
    else:
        rep = certify_strong(sc.set, sc.operator, sc.cusco, variant, sampler, tol, scenario=sc.name)
    _write(out / "certificate.json", rep.to_json())
    return _verdict_code(rep.verdict)


def cmd_check_lyapunov(sc: Scenario, out: Path, args) -> int:
    if sc.lyapunov is None:
        raise ScenarioError([("lyapunov", "check-lyapunov needs a lyapunov pair")])
    variant = args.variant or sc.check.get("lyapunov_variant", "s1")
    tol = args.tol if args.tol is not None else sc.check.get("tol", 1e-7)
    region = None
    if "region" in sc.sampler:
        region = parse_body(sc.sampler["region"], "sampler.region", sc.dimension)
    sampler = sc.make_sampler(args.seed)
    rep = certify_lyapunov(sc.lyapunov, sc.operator, sc.cusco, variant, sampler, tol, region,
                           m=sc.sampler.get("m"), scenario=sc.name)
    verdict = rep.verdict
    traj = integrate(sc.operator, sc.cusco, sc.integrator_config(), sc.initial_state())
    check = verify_along_trajectory(sc.lyapunov, traj)
    rep.extra["trajectory"] = check.to_dict()
    rep.extra["V(x0)"] = check.V0
    rep.extra["worst_violation_t"] = check.worst_violation_t
    if verdict == PASS and not check.passed:
        verdict = FAIL
        rep.notes.append("trajectory inequality violated beyond C·h")
    rep.verdict = verdict
    _write(out / "lyapunov.json", rep.to_json())
    return _verdict_code(verdict)


def cmd_sweep(sc: Scenario, out: Path, args) -> int:
    param = args.param or sc.sweep.get("param", "h")
    values = args.values or sc.sweep.get("values", [1e-2, 1e-3, 1e-4])
    x0 = sc.initial_state()
    rows = []
    for val in values:
        cfg = sc.integrator_config(val if param == "h" else None)
        if param == "T":
            cfg = type(cfg)(cfg.h, val, cfg.mode, cfg.refine)
        traj = integrate(sc.operator, sc.cusco, cfg, x0)
        rows.append({"param": param, "value": val, "h": cfg.h, "T": cfg.T,
                     "steps": len(traj.times) - 1, "final": traj.final})
    if param == "h":
        ref = min(rows, key=lambda r: r["h"])["final"]
        for r in rows:
            r["diff_to_finest"] = float(np.linalg.norm(r["final"] - ref))
    n = sc.dimension
    header = ["param", "value", "steps"] + [f"x{i + 1}" for i in range(n)]
    if param == "h":
        header.append("diff_to_finest")
    lines = [",".join(header)]
    for r in rows:
        cells = [r["param"], format(r["value"], ".17g"), str(r["steps"])]
        cells += [format(float(v), ".17g") for v in r["final"]]
        if param == "h":
            cells.append(format(r["diff_to_finest"], ".17g"))
        lines.append(",".join(cells))
    _write(out / "sweep.csv", "\n".join(lines) + "\n")
    _write(out / "sweep.json", dumps({"scenario": sc.name, "seed": sc.seed, "rows": rows}))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "check-invariance": cmd_check_invariance,
    "check-lyapunov": cmd_check_lyapunov,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mf", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--variant", help="criterion variant tag")
    p.add_argument("--tol", type=float, help="margin tolerance")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--param", choices=["h", "T"], help="sweep parameter")
    p.add_argument("--values", type=float, nargs="+", help="sweep values")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run_command(cmd: str, scenario: Scenario, out_dir, args=None) -> int:
    """Run one command on a loaded scenario; returns the exit code."""
    args = args or build_parser().parse_args([cmd, "-"])
    try:
        return COMMANDS[cmd](scenario, Path(out_dir), args)
    except ScenarioError as exc:
        for path, msg in exc.errors:
            print(f"error: {path}: {msg}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, ArithmeticError, RuntimeError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.tol is not None and not (args.tol >= 0 and math.isfinite(args.tol)):
        print("error: --tol must be a finite number ≥ 0", file=sys.stderr)
        return EXIT_ERROR
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be in [0, 2^64)", file=sys.stderr)
        return EXIT_ERROR
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        for path, msg in exc.errors:
            print(f"error: {path or '<root>'}: {msg}", file=sys.stderr)
        return EXIT_ERROR
    if args.seed is not None:
        sc.seed = args.seed
    code = run_command(args.command, sc, args.out, args)
    log.info("exit code %d", code)
    return code


if __name__ == "__main__":
    sys.exit(main())

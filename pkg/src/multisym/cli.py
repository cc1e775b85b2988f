"""``multisym`` command-line entry point.

Exit codes: 0 pass, 1 a suite failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import time
from pathlib import Path

import numpy as np

from .calculus import BoundaryStencilError, DifferentiationConfig
from .catalog import catalog, get_example
from .equations import Variation, action, action_first_variation, evaluate_suites
from .expr import ExpressionError
from .nplectic import check_nplectic, degeneracy_scan, hamiltonian_vector_field
from .problem import (
    ManifoldProblem,
    Problem,
    ProblemError,
    example_problems,
    load_problem,
    parse_box,
    problem_from_example,
)
from .report import ResidualReport
from .solvers import LaplaceConvergenceError

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "problem"


def _dump(payload: dict, timestamp: bool = True) -> str:
    if timestamp:
        payload = {**payload, "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
    return json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _problems(args) -> list[Problem]:
    if args.file:
        prob = load_problem(args.file)
        if isinstance(prob, ManifoldProblem):
            raise ProblemError(f"{args.file} describes a manifold; use `nplectic check`")
        return [prob]
    names = [s.name for s in catalog()] if args.example in (None, "all") else [args.example]
    out = []
    for name in names:
        try:
            out.extend(example_problems(name))
        except KeyError as exc:
            raise ProblemError(str(exc.args[0])) from None
    return out


def _cfg(args, prob: Problem) -> DifferentiationConfig:
    if getattr(args, "step", None) is not None and prob.section is not None:
        return DifferentiationConfig(args.step, prob.cfg.scheme)
    return prob.cfg


def run_problem(prob: Problem, args) -> tuple[ResidualReport, float, bool]:
    """Residual report, tolerance used, and pass/fail for one problem."""
    HV = prob.volterra()
    cfg = _cfg(args, prob)
    grid = getattr(args, "grid", None)
    if prob.section is not None:
        points = prob.box.grid(grid or prob.grid)
        tol = args.tol if args.tol is not None else (prob.tol if prob.tol is not None else 1e-6)
        psi = prob.section
        mode = "analytic"
    else:
        psi = prob.solve(grid=grid, step=getattr(args, "step", None))
        points = psi.interior_nodes(2)
        h = float(np.max(psi.spacing))
        tol = args.tol if args.tol is not None else (prob.tol if prob.tol is not None else 5 * h * h)
        mode = "grid"
    config = {"problem": prob.name, "mode": mode, "tol": tol, "suites": list(prob.suites),
              "seed": args.seed if args.seed is not None else prob.seed,
              "step": cfg.step, "scheme": cfg.scheme, "input": prob.echo}
    report = evaluate_suites(HV, psi, points, prob.suites, cfg, config)
    return report, tol, report.passed(tol)


def cmd_verify(args, residuals_only: bool = False) -> int:
    results = []
    ok = True
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    csv_parts = []
    for prob in _problems(args):
        report, tol, passed = run_problem(prob, args)
        ok &= passed
        entry = {"name": prob.name, "passed": passed, "tol": tol, **report.to_dict(timestamp=False)}
        if not passed:
            entry["failing"] = sorted(n for n in report.equations if report.l_inf(n) >= tol)
        results.append(entry)
        csv_parts.append(report.to_csv())
        if out_dir:
            stem = _safe(prob.name)
            (out_dir / f"{stem}.json").write_text(_dump(entry) + "\n", encoding="utf-8")
            report.to_csv(out_dir / f"{stem}.csv")
    payload = {"passed": ok, "problems": results}
    if args.format == "csv":
        sys.stdout.write("".join(csv_parts))
    else:
        print(_dump(payload))
    if residuals_only:
        return EXIT_OK
    return EXIT_OK if ok else EXIT_FAIL


def cmd_solve(args) -> int:
    probs = [p for p in _problems(args) if p.section is None]
    if not probs:
        raise ProblemError("nothing to solve: the problem has no [solver] block")
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    summaries = []
    for prob in probs:
        t0 = time.perf_counter()
        sec = prob.solve(grid=args.grid, step=args.step)
        elapsed = time.perf_counter() - t0
        points = sec.interior_nodes(2)
        h = float(np.max(sec.spacing))
        report = evaluate_suites(prob.volterra(), sec, points, ("hv",))
        entry = {"name": prob.name, "grid": list(sec.grid_shape), "spacing": h,
                 "hv": report.summary()["hv"], "hv_tol": 5 * h * h,
                 "passed": report.passed(5 * h * h)}
        if out_dir:
            path = out_dir / f"{_safe(prob.name)}-solution.csv"
            sec.to_csv(path)
            entry["solution_csv"] = str(path)
        elif args.format == "csv":
            sys.stdout.write(sec.to_csv())
        summaries.append((entry, elapsed))
    if args.format != "csv" or out_dir:
        print(_dump({"solutions": [e for e, _ in summaries]}))
    for entry, elapsed in summaries:
        print(f"{entry['name']}: solved in {elapsed:.2f}s, HV L_inf {entry['hv']['L_inf']:.3e}", file=sys.stderr)
    return EXIT_OK if all(e["passed"] for e, _ in summaries) else EXIT_FAIL


def _action_target(args) -> Problem:
    if args.file:
        prob = load_problem(args.file)
        if isinstance(prob, ManifoldProblem) or prob.section is None:
            raise ProblemError("action needs a problem with an analytic [section]")
        return prob
    spec = get_example(args.example or "oscillator")
    label = args.section or next(iter(spec.exact))
    if label not in spec.exact:
        raise ProblemError(f"example {spec.name!r} has no section {label!r}; choose from {sorted(spec.exact)}")
    return problem_from_example(spec, label)


def cmd_action(args) -> int:
    try:
        prob = _action_target(args)
    except KeyError as exc:
        raise ProblemError(str(exc.args[0])) from None
    V = parse_box(args.V, prob.shape.n) if args.V else prob.box
    dom = prob.section.domain
    if dom is not None and not dom.compactly_contains(V):
        raise ProblemError(f"--V {V.bounds} must lie strictly inside the section domain {dom.bounds}")
    cells = args.cells or {1: 512, 2: 512}.get(prob.shape.n, 32)
    HV = prob.volterra()
    cfg = _cfg(args, prob)
    value = action(HV, prob.section, V, args.quadrature, cells, cfg)
    payload = {"problem": prob.name, "V": [list(b) for b in V.bounds], "quadrature": args.quadrature,
               "cells": cells, "action": value}
    ok = True
    if args.variations:
        seed = args.seed if args.seed is not None else prob.seed
        rng = np.random.default_rng(seed)
        rows = []
        if args.tol is not None:
            tol = args.tol
        elif prob.shape.n == 1:
            tol = 1e-6
        else:
            h = float(np.max(V.upper - V.lower)) / cells
            tol = 5 * h * h
        for _ in range(args.variations):
            phi = Variation.random(prob.shape, V, rng)
            fd, an = action_first_variation(HV, prob.section, phi, V, quadrature=args.quadrature,
                                            cells=cells, cfg=cfg)
            rows.append({"fd": fd, "analytic": an, "gap": abs(fd - an)})
            ok &= abs(fd - an) < tol
        payload.update({"seed": seed, "variations": rows, "tol": tol, "passed": ok})
    print(_dump(payload))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_nplectic(args) -> int:
    source = args.file or args.example
    if not source:
        raise ProblemError("nplectic check needs --file or --example")
    prob = load_problem(source)
    if not isinstance(prob, ManifoldProblem):
        raise ProblemError(f"{source} is not a manifold problem")
    if args.seed is not None:
        lo, hi = prob.samples.min(), prob.samples.max()
        prob.samples = np.random.default_rng(args.seed).uniform(lo, hi, size=prob.samples.shape)
    rep = check_nplectic(prob.manifold, prob.samples)
    payload = {"manifold": prob.name, "coordinates": prob.coordinates, **rep.to_dict()}
    if prob.hamiltonian is not None:
        x0 = prob.samples[0]
        payload["degeneracy"] = degeneracy_scan(prob.manifold, prob.hamiltonian, x0)
        if prob.hamiltonian.degree == prob.manifold.n - 1 and rep.nondegenerate:
            payload["hamiltonian_vector_field"] = {
                "at": x0, "X": hamiltonian_vector_field(prob.manifold, prob.hamiltonian, x0)}
    print(_dump(payload))
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_catalog(args) -> int:
    print(json.dumps([s.describe() for s in catalog()], indent=2, sort_keys=True))
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="multisym", description="Verify covariant Hamiltonian field equations.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, example_default=None):
        p.add_argument("--file", help="problem file path or built-in name")
        p.add_argument("--example", default=example_default, help="catalog example name, or 'all'")
        p.add_argument("--grid", type=int, help="nodes per axis")
        p.add_argument("--step", type=float, help="difference step (analytic problems) or solver step")
        p.add_argument("--tol", type=float, help="pass tolerance")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    for name, help_ in (("verify", "run the residual suites and exit nonzero on failure"),
                        ("residuals", "print residual reports without judging them"),
                        ("solve", "run a solver and summarize its section")):
        common(sub.add_parser(name, help=help_))
    p = sub.add_parser("action", help="localized action and first variations")
    common(p)
    p.add_argument("--section", help="label of the example's exact section")
    p.add_argument("--V", help="integration box, e.g. '0,1;0,1'")
    p.add_argument("--quadrature", choices=("midpoint", "trapezoid", "gauss"), default="midpoint")
    p.add_argument("--cells", type=int)
    p.add_argument("--variations", type=int, default=0, help="number of seeded random variations")
    p = sub.add_parser("nplectic", help="checks on a generic n-plectic manifold")
    p.add_argument("action", choices=("check",))
    common(p)
    sub.add_parser("catalog", help="list built-in examples")
    return ap


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    handlers = {
        "verify": cmd_verify,
        "residuals": lambda a: cmd_verify(a, residuals_only=True),
        "solve": cmd_solve,
        "action": cmd_action,
        "nplectic": cmd_nplectic,
        "catalog": cmd_catalog,
    }
    try:
        return handlers[args.command](args)
    except (ProblemError, ExpressionError) as exc:
        print(json.dumps({"error": "input", "message": str(exc)}), file=sys.stderr)
        return EXIT_INPUT
    except (LaplaceConvergenceError, BoundaryStencilError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: solve, sweep, oos, check.

Exit codes: 0 success, 1 bound-check failure, 2 input/parse error,
3 solver failure, 4 non-convergence at the iteration cap.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import report as rep
from .casefile import CaseFileError, file_sha256, load_case
from .ccg import SolveReport, SolverFailure, solve_ccg
from .fusion import TESTING_DISTRIBUTIONS, chebyshev_bound_check
from .milp import SolverParams
from .model import DispatchCase, FirstStageDecision, validate_case
from .oracles import oos_evaluate

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_ITER_CAP = 4


def _load(path: str) -> DispatchCase:
    try:
        return load_case(path)
    except FileNotFoundError:
        raise SystemExit_with(EXIT_INPUT, f"error: case file not found: {path}")
    except json.JSONDecodeError as exc:
        raise SystemExit_with(
            EXIT_INPUT,
            f"error: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
        )
    except CaseFileError as exc:
        raise SystemExit_with(EXIT_INPUT, f"error: {exc}")


class SystemExit_with(SystemExit):
    def __init__(self, code: int, message: str):
        print(message, file=sys.stderr)
        super().__init__(code)


def _solver_params() -> SolverParams:
    # RGD_SOLVER_THREADS is recorded in the manifest; the bundled backend
    # runs single-threaded regardless.
    return SolverParams()


def cmd_solve(args: argparse.Namespace) -> int:
    case = _load(args.case)
    outdir = Path(args.out)
    frozen = None
    if args.freeze_tau is not None:
        frozen = [args.freeze_tau] * case.n_agents
    try:
        result = solve_ccg(
            case,
            mode=args.mode,
            eps=args.eps,
            rel_gap=args.rel_gap,
            iter_cap=args.iter_cap,
            frozen_tau=frozen,
            solver=_solver_params(),
        )
    except SolverFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    case_hash = file_sha256(args.case)
    rep.write_solve_outputs(outdir, case, result, case_hash, figures=not args.no_figures)
    rep.write_manifest(
        outdir / "manifest.json",
        "solve",
        {
            "case": args.case, "mode": args.mode, "eps": args.eps,
            "rel_gap": args.rel_gap, "iter_cap": args.iter_cap,
            "freeze_tau": args.freeze_tau,
        },
        args.seed,
        case_hash,
    )
    print(f"{result.termination}: objective="
          f"{result.objective if result.objective is not None else 'n/a'} "
          f"iterations={result.n_iterations} -> {outdir}")
    if result.termination == "iter_cap":
        return EXIT_ITER_CAP
    if result.termination in ("solver_error",):
        return EXIT_SOLVER
    return EXIT_OK


def _sweep_case(case: DispatchCase, param: str, value: float) -> DispatchCase:
    if param == "m":
        return case.with_prediction_cost(value)
    if param == "delta_xi":
        return case.with_confidence(value, value)
    if param == "variance_multiplier":
        return case.with_scaled_variance(value)
    raise ValueError(f"unknown sweep parameter {param!r}")


def _sweep_point(payload: tuple) -> dict:
    case, param, value, with_baseline = payload
    point_case = _sweep_case(case, param, value)
    row: dict = {"value": value}
    try:
        res = solve_ccg(point_case, mode="mapping", solver=_solver_params())
        row["termination"] = res.termination
        if res.objective is not None:
            row["objective"] = res.objective
            row["payments_total"] = float(res.payments.sum())
            row["operation_cost"] = res.objective - row["payments_total"]
            row["accuracies"] = res.accuracies.tolist()
            row["half_widths"] = res.half_widths.tolist()
        row["iterations"] = res.n_iterations
    except SolverFailure as exc:
        row["termination"] = f"solver_error: {exc}"
    if with_baseline:
        try:
            base = solve_ccg(point_case, mode="mapping",
                             frozen_tau=[0.0] * point_case.n_agents,
                             solver=_solver_params())
            row["baseline_termination"] = base.termination
            if base.objective is not None:
                row["baseline_objective"] = base.objective
        except SolverFailure as exc:
            row["baseline_termination"] = f"solver_error: {exc}"
    return row


def cmd_sweep(args: argparse.Namespace) -> int:
    case = _load(args.case)
    try:
        grid = [float(tok) for tok in args.grid.split(",") if tok.strip()]
    except ValueError:
        print(f"error: cannot parse grid {args.grid!r}", file=sys.stderr)
        return EXIT_INPUT
    if not grid:
        print("error: empty sweep grid", file=sys.stderr)
        return EXIT_INPUT
    if args.param not in ("m", "delta_xi", "variance_multiplier"):
        print(f"error: unknown sweep parameter {args.param!r}", file=sys.stderr)
        return EXIT_INPUT
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    payloads = [(case, args.param, v, args.with_baseline) for v in grid]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, payloads))
    else:
        rows = [_sweep_point(p) for p in payloads]
    rows.sort(key=lambda r: r["value"])
    rep.write_sweep_csv(outdir / "sweep.csv", case, args.param, rows)
    if not args.no_figures:
        rep.fig_sweep(outdir / "sweep.png", case, args.param, rows)
    case_hash = file_sha256(args.case)
    rep.write_manifest(
        outdir / "manifest.json", "sweep",
        {"case": args.case, "param": args.param, "grid": grid,
         "with_baseline": args.with_baseline, "jobs": args.jobs},
        args.seed, case_hash,
    )
    bad = [r for r in rows if str(r.get("termination", "")).startswith("solver_error")]
    print(f"swept {len(rows)} points ({len(bad)} solver failures) -> {outdir}")
    return EXIT_SOLVER if bad else EXIT_OK


def _decision_from_report(case: DispatchCase, doc: dict) -> FirstStageDecision:
    agent_ids = [a.id for a in case.agents]
    try:
        fs = doc["first_stage"]
        p = np.asarray(fs["p_mw"], dtype=float)
        r_up = np.asarray(fs["r_up_mw"], dtype=float)
        r_dn = np.asarray(fs["r_dn_mw"], dtype=float)
        tau = np.array([doc["accuracies"][a] for a in agent_ids], dtype=float)
        pay = np.array([doc["payments_usd"][a] for a in agent_ids], dtype=float)
    except KeyError as exc:
        raise CaseFileError(f"solution file is missing {exc}")
    J, T = case.n_gen, case.horizon
    if p.shape != (J, T) or r_up.shape != (J, T) or r_dn.shape != (J, T):
        raise CaseFileError(
            f"solution dimensions {p.shape} do not match the case ({J}, {T})"
        )
    return FirstStageDecision(p=p, r_up=r_up, r_dn=r_dn, payments=pay, accuracies=tau)


def cmd_oos(args: argparse.Namespace) -> int:
    case = _load(args.case)
    try:
        doc = json.loads(Path(args.solution).read_text())
        x = _decision_from_report(case, doc)
    except FileNotFoundError:
        print(f"error: solution file not found: {args.solution}", file=sys.stderr)
        return EXIT_INPUT
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON at line {exc.lineno}, column {exc.colno}",
              file=sys.stderr)
        return EXIT_INPUT
    except CaseFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        result = oos_evaluate(
            case, x,
            distribution=args.dist,
            std_multiplier=args.mult,
            n=args.n,
            seed=args.seed,
            center_on=args.center,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rep.write_oos_csv(outdir / "oos.csv", result)
    rep.write_oos_summary_csv(outdir / "oos_summary.csv", [result])
    if not args.no_figures:
        rep.fig_oos(outdir / "oos.png", [result])
    rep.write_manifest(
        outdir / "manifest.json", "oos",
        {"case": args.case, "solution": args.solution, "dist": args.dist,
         "mult": args.mult, "n": args.n, "center": args.center},
        args.seed, file_sha256(args.case),
    )
    print(f"average total cost {result.average_total_cost:.4f} "
          f"({result.infeasible_count} infeasible of {result.n_scenarios}) -> {outdir}")
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    case = _load(args.case)
    rows = []
    ok = True
    validation = validate_case(case)
    for finding in validation.violations:
        ok = False
        rows.append(("structure", "-", "-", "-", finding))
    dists = ("three_point_tight", "rademacher", "three_point_xi")
    if args.adversarial:
        dists = dists + ("inflated",)
    for dist in dists:
        chk = chebyshev_bound_check(
            dist, case.n_agents, case.delta, case.xi, args.samples, seed=args.seed
        )
        for kind, emp, bound, slack in (
            ("component", chk.component_empirical, chk.component_bound,
             chk.component_slack),
            ("budget", chk.budget_empirical, chk.budget_bound, chk.budget_slack),
        ):
            passed = emp <= bound + slack
            ok = ok and passed
            rows.append((dist, kind, f"{emp:.5f}", f"{bound:.5f}",
                         "pass" if passed else "FAIL"))
    width = [max(len(str(r[i])) for r in rows + [("distribution", "kind",
             "empirical", "bound", "result")]) for i in range(5)]
    header = ("distribution", "kind", "empirical", "bound", "result")
    print("  ".join(h.ljust(width[i]) for i, h in enumerate(header)))
    for r in rows:
        print("  ".join(str(r[i]).ljust(width[i]) for i in range(5)))
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rgd",
        description="Robust generation dispatch with purchased predictions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run the cutting-plane solver on a case")
    ps.add_argument("case")
    ps.add_argument("--mode", choices=["mapping", "traditional"], default="mapping")
    ps.add_argument("--eps", type=float, default=None, help="absolute gap tolerance [$]")
    ps.add_argument("--rel-gap", type=float, default=None, help="relative gap tolerance")
    ps.add_argument("--iter-cap", type=int, default=None)
    ps.add_argument("--freeze-tau", type=float, default=None,
                    help="pin every accuracy (0 = no-purchase baseline)")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", default="out/solve")
    ps.add_argument("--no-figures", action="store_true")
    ps.set_defaults(func=cmd_solve)

    pw = sub.add_parser("sweep", help="re-solve across a parameter grid")
    pw.add_argument("case")
    pw.add_argument("--param", required=True,
                    choices=["m", "delta_xi", "variance_multiplier"])
    pw.add_argument("--grid", required=True, help="comma-separated values")
    pw.add_argument("--jobs", type=int, default=1)
    pw.add_argument("--with-baseline", action="store_true",
                    help="also solve the no-purchase baseline per point")
    pw.add_argument("--seed", type=int, default=0)
    pw.add_argument("--out", default="out/sweep")
    pw.add_argument("--no-figures", action="store_true")
    pw.set_defaults(func=cmd_sweep)

    po = sub.add_parser("oos", help="out-of-sample Monte Carlo evaluation")
    po.add_argument("case")
    po.add_argument("solution", help="report.json produced by 'rgd solve'")
    po.add_argument("--dist", choices=["uniform", "gaussian"], default="gaussian")
    po.add_argument("--mult", type=float, default=1.0)
    po.add_argument("-n", type=int, default=10000)
    po.add_argument("--seed", type=int, default=0)
    po.add_argument("--center", choices=["truth", "fused"], default="truth")
    po.add_argument("--out", default="out/oos")
    po.add_argument("--no-figures", action="store_true")
    po.set_defaults(func=cmd_oos)

    pc = sub.add_parser("check", help="validate a case and the coverage bounds")
    pc.add_argument("case")
    pc.add_argument("--samples", type=int, default=100000)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--adversarial", action="store_true",
                    help="include a distribution that violates the assumptions")
    pc.set_defaults(func=cmd_check)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit_with as exc:
        return exc.code


if __name__ == "__main__":
    raise SystemExit(main())

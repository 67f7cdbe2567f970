"""Result emission: deterministic JSON/CSV files plus rendered figures.

Report, trace and CSV outputs are byte-stable for identical inputs and
seeds; wall-clock timings go to a separate sidecar so they never leak
into the deterministic files. Figures are rendered with the Agg backend
next to the delimited data they visualize.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
import subprocess
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .ccg import SolveReport, bounds_trace
from .model import DispatchCase
from .oracles import OosResult


def _finite(x: Optional[float]):
    if x is None:
        return None
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


def dump_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def solve_report_to_dict(case: DispatchCase, report: SolveReport, case_hash: str) -> dict:
    agent_ids = [a.id for a in case.agents]
    doc: dict[str, Any] = {
        "schema": "rgd-solve-report/1",
        "manifest": "manifest.json",
        "case_name": case.name,
        "case_sha256": case_hash,
        "mode": report.mode,
        "termination": report.termination,
        "converged": report.converged,
        "objective_usd": _finite(report.objective),
        "lower_bound_usd": _finite(report.lower_bound),
        "upper_bound_usd": _finite(report.upper_bound),
        "eps_usd": _finite(report.eps),
        "worst_case_cost_usd": _finite(report.worst_case_cost),
        "iterations": report.n_iterations,
    }
    if report.x is not None:
        doc["accuracies"] = {
            agent_ids[i]: float(report.accuracies[i]) for i in range(case.n_agents)
        }
        doc["payments_usd"] = {
            agent_ids[i]: float(report.payments[i]) for i in range(case.n_agents)
        }
        doc["half_widths_mw"] = {
            agent_ids[i]: float(report.half_widths[i]) for i in range(case.n_agents)
        }
        doc["first_stage"] = {
            "p_mw": report.x.p.tolist(),
            "r_up_mw": report.x.r_up.tolist(),
            "r_dn_mw": report.x.r_dn.tolist(),
        }
    if report.frozen_tau is not None:
        doc["frozen_tau"] = report.frozen_tau.tolist()
    return doc


def write_trace(path: Path, report: SolveReport) -> None:
    with path.open("w") as fh:
        for rec in report.iterations:
            row = {
                "k": rec.k,
                "lb_usd": _finite(rec.lb),
                "ub_usd": _finite(rec.ub),
                "fc_slack_mw": _finite(rec.fc_slack),
                "status": rec.status,
                "signature": None if rec.signature is None else rec.signature.tolist(),
                "scenario_mw": None if rec.scenario is None else rec.scenario.tolist(),
                "center_residual_mw": _finite(rec.center_residual),
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def write_timings(path: Path, report: SolveReport) -> None:
    rows = [
        {"k": rec.k, "mp_s": rec.mp_time, "fc_s": rec.fc_time, "sp_s": rec.sp_time}
        for rec in report.iterations
    ]
    dump_json(path, {"schema": "rgd-timings/1", "iterations": rows})


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def write_bounds_csv(path: Path, report: SolveReport) -> None:
    _write_csv(
        path,
        ["iteration", "lower_bound_usd", "upper_bound_usd", "fc_slack_mw"],
        [
            (rec.k, _finite(rec.lb), _finite(rec.ub), _finite(rec.fc_slack))
            for rec in report.iterations
        ],
    )


def write_widths_csv(path: Path, case: DispatchCase, report: SolveReport) -> None:
    rows = []
    if report.x is not None:
        for i, a in enumerate(case.agents):
            rows.append(
                (
                    a.id,
                    float(report.accuracies[i]),
                    float(report.half_widths[i]),
                    2.0 * float(report.half_widths[i]),
                    float(report.payments[i]),
                )
            )
    _write_csv(
        path,
        ["agent_id", "accuracy", "half_width_mw", "width_mw", "payment_usd"],
        rows,
    )


def write_payments_csv(path: Path, case: DispatchCase, report: SolveReport) -> None:
    rows = []
    if report.x is not None:
        rows = [
            (case.agents[i].id, float(report.payments[i]))
            for i in range(case.n_agents)
        ]
    _write_csv(path, ["agent_id", "payment_usd"], rows)


def git_describe() -> Optional[str]:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).parent,
        )
        return out.stdout.strip() or None
    except Exception:
        return None


def write_manifest(
    path: Path,
    command: str,
    flags: dict,
    seed: Optional[int],
    input_sha256: str,
) -> None:
    doc = {
        "schema": "rgd-manifest/1",
        "command": command,
        "flags": flags,
        "seed": seed,
        "input_sha256": input_sha256,
        "timestamp_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "version": __version__,
        "git_describe": git_describe(),
        "solver_threads_env": os.environ.get("RGD_SOLVER_THREADS"),
    }
    dump_json(path, doc)


# -- figures ------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def fig_bounds(path: Path, report: SolveReport) -> None:
    plt = _pyplot()
    trace = bounds_trace(report)
    ks = [k for k, _, _ in trace]
    lbs = [lb for _, lb, _ in trace]
    ubs = [ub if math.isfinite(ub) else float("nan") for _, _, ub in trace]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(ks, lbs, where="post", marker="o", label="lower bound")
    ax.step(ks, ubs, where="post", marker="s", label="upper bound")
    ax.set_xlabel("iteration")
    ax.set_ylabel("bound [$]")
    ax.set_title(f"{report.mode} bounds")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_widths_payments(path: Path, case: DispatchCase, report: SolveReport) -> None:
    if report.x is None:
        return
    plt = _pyplot()
    ids = [a.id for a in case.agents]
    widths = 2.0 * np.asarray(report.half_widths)
    pays = np.asarray(report.payments)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.bar(ids, widths, color="tab:blue")
    ax1.set_ylabel("set width 2u^h [MW]")
    ax1.set_title("uncertainty widths")
    ax2.bar(ids, pays, color="tab:orange")
    ax2.set_ylabel("payment [$]")
    ax2.set_title("prediction payments")
    for ax in (ax1, ax2):
        ax.grid(alpha=0.3, axis="y")
        ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_solve_outputs(
    outdir: Path,
    case: DispatchCase,
    report: SolveReport,
    case_hash: str,
    figures: bool = True,
) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    dump_json(outdir / "report.json", solve_report_to_dict(case, report, case_hash))
    write_trace(outdir / "trace.jsonl", report)
    write_timings(outdir / "timings.json", report)
    write_bounds_csv(outdir / "bounds.csv", report)
    write_widths_csv(outdir / "widths.csv", case, report)
    write_payments_csv(outdir / "payments.csv", case, report)
    if figures:
        fig_bounds(outdir / "bounds.png", report)
        fig_widths_payments(outdir / "widths_payments.png", case, report)


# -- sweep and out-of-sample outputs --------------------------------------------


def write_sweep_csv(path: Path, case: DispatchCase, param: str, rows: list[dict]) -> None:
    agent_ids = [a.id for a in case.agents]
    header = ["param", "value", "termination", "objective_usd",
              "operation_cost_usd", "payments_total_usd", "iterations"]
    header += [f"tau_{aid}" for aid in agent_ids]
    header += [f"width_mw_{aid}" for aid in agent_ids]
    header += ["baseline_termination", "baseline_objective_usd"]
    table = []
    for row in rows:
        rec = [param, row["value"], row["termination"], _finite(row.get("objective")),
               _finite(row.get("operation_cost")), _finite(row.get("payments_total")),
               row.get("iterations")]
        taus = row.get("accuracies")
        widths = row.get("half_widths")
        rec += [None if taus is None else float(taus[i]) for i in range(len(agent_ids))]
        rec += [None if widths is None else 2.0 * float(widths[i])
                for i in range(len(agent_ids))]
        rec += [row.get("baseline_termination"), _finite(row.get("baseline_objective"))]
        table.append(rec)
    _write_csv(path, header, table)


def fig_sweep(path: Path, case: DispatchCase, param: str, rows: list[dict]) -> None:
    plt = _pyplot()
    vals = [r["value"] for r in rows]
    objs = [r.get("objective") if r.get("objective") is not None else float("nan")
            for r in rows]
    pays = [r.get("payments_total") if r.get("payments_total") is not None
            else float("nan") for r in rows]
    base = [r.get("baseline_objective") if r.get("baseline_objective") is not None
            else float("nan") for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(vals, objs, marker="o", label="proposed total")
    if any(math.isfinite(b) for b in base):
        ax1.plot(vals, base, marker="x", label="no-purchase baseline")
    ax1.set_xlabel(param)
    ax1.set_ylabel("total cost [$]")
    ax1.legend()
    ax1.grid(alpha=0.3)
    ax2.plot(vals, pays, marker="o", color="tab:orange")
    ax2.set_xlabel(param)
    ax2.set_ylabel("total payments [$]")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_oos_csv(path: Path, result: OosResult) -> None:
    rows = []
    for k in range(result.n_scenarios):
        ok = bool(result.feasible_mask[k])
        rows.append((k, _finite(result.recourse_costs[k]) if ok else None, int(ok)))
    _write_csv(path, ["scenario", "recourse_cost_usd", "feasible"], rows)


def write_oos_summary_csv(path: Path, results: list[OosResult]) -> None:
    _write_csv(
        path,
        ["distribution", "std_multiplier", "n_scenarios", "infeasible_count",
         "first_stage_cost_usd", "payments_usd", "average_total_cost_usd"],
        [
            (r.distribution, r.std_multiplier, r.n_scenarios, r.infeasible_count,
             _finite(r.first_stage_cost), _finite(r.payments_total),
             _finite(r.average_total_cost))
            for r in results
        ],
    )


def fig_oos(path: Path, results: list[OosResult]) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    by_dist: dict[str, list[OosResult]] = {}
    for r in results:
        by_dist.setdefault(r.distribution, []).append(r)
    for dist, rs in sorted(by_dist.items()):
        rs = sorted(rs, key=lambda r: r.std_multiplier)
        ax.plot(
            [r.std_multiplier for r in rs],
            [r.average_total_cost for r in rs],
            marker="o", label=dist,
        )
    ax.set_xlabel("std multiplier")
    ax.set_ylabel("average total cost [$]")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

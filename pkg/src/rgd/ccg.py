"""Cutting-plane engine: mapping-based and traditional variants.

Each iteration solves the master, checks robust feasibility, prices the
worst case, and commits one cut. The mapping variant commits normalized
deviation signatures that stay on a vertex of the moving set; the
traditional variant pins the numeric worst-case scenario.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .formulations import (
    CanonicalTwoStage,
    MasterState,
    VertexSignature,
    build_fc,
    build_mp,
    build_sp,
    canonicalize,
    extract_signature,
    tau_of_width,
    width_range,
)
from .fusion import DduUncertaintySet, build_set, prediction_cost
from .milp import SolverParams
from .model import DispatchCase, FirstStageDecision, validate_case


class SolverFailure(RuntimeError):
    """Backend failed mid-loop; carries the stage and status."""


@dataclass(frozen=True)
class IterationRecord:
    k: int
    lb: float
    ub: float                          # best (running) upper bound
    fc_slack: float
    status: str                        # FeasCut | OptCut | Converged
    signature: Optional[np.ndarray]    # committed deviation, (I, T)
    scenario: Optional[np.ndarray]     # committed numeric scenario (traditional)
    center_residual: float             # max |center var - center curve|
    mp_time: float
    fc_time: float
    sp_time: float


@dataclass(frozen=True)
class SolveReport:
    mode: str
    termination: str                   # converged | iter_cap | infeasible | stalled | solver_error
    objective: Optional[float]
    lower_bound: float
    upper_bound: float
    eps: float
    x: Optional[FirstStageDecision]
    accuracies: Optional[np.ndarray]
    payments: Optional[np.ndarray]
    half_widths: Optional[np.ndarray]
    worst_case_cost: Optional[float]   # second-stage value at the incumbent
    robust_slack: Optional[float]      # FC optimum at the incumbent
    robust_feas_tol: Optional[float]   # tolerance the slack was held to
    iterations: tuple[IterationRecord, ...]
    frozen_tau: Optional[np.ndarray] = None

    @property
    def converged(self) -> bool:
        return self.termination == "converged"

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)


def bounds_trace(report: SolveReport) -> list[tuple[int, float, float]]:
    """(iteration, lower bound, upper bound) series for plotting."""
    return [(rec.k, rec.lb, rec.ub) for rec in report.iterations]


@dataclass(frozen=True)
class _Incumbent:
    x_vec: np.ndarray
    tau: np.ndarray
    payments: np.ndarray
    half_widths: np.ndarray
    sp_value: float
    total: float
    fc_slack: float
    feas_tol: float


def _gap_threshold(eps: Optional[float], rel_gap: Optional[float], ub: float) -> float:
    if rel_gap is not None:
        return rel_gap * max(1.0, abs(ub))
    if eps is not None:
        return eps
    if not math.isfinite(ub):
        return 1.0
    return max(1.0, 1e-4 * abs(ub))


def _first_stage_from_vec(case: DispatchCase, x_vec: np.ndarray,
                          tau: np.ndarray, payments: np.ndarray) -> FirstStageDecision:
    J, T = case.n_gen, case.horizon
    return FirstStageDecision(
        p=x_vec[: J * T].reshape(J, T).copy(),
        r_up=x_vec[J * T: 2 * J * T].reshape(J, T).copy(),
        r_dn=x_vec[2 * J * T:].reshape(J, T).copy(),
        payments=payments.copy(),
        accuracies=tau.copy(),
    )


def _exact_payments(case: DispatchCase, tau: np.ndarray) -> np.ndarray:
    out = np.zeros(case.n_agents)
    for i, a in enumerate(case.agents):
        t = min(float(tau[i]), case.options.tau_max)
        out[i] = prediction_cost(t, a.prior_variance, case.m_hat)
    return out


def _drift_slack_bound(canon: CanonicalTwoStage, center_drift_l1: float) -> float:
    """Feasibility slack explainable by the master's center drift.

    The master ties its centers to the width curve through a weighted
    penalty, so they may sit a little off the exact centers the
    feasibility check uses. A drift vector d changes each recourse row by
    at most |D_r . d|, so the summed slack is bounded by ||d||_1 times the
    largest column sum of |D|.
    """
    if canon.nu == 0:
        return 0.0
    colsum = float(np.abs(canon.D).sum(axis=0).max())
    return center_drift_l1 * colsum


def solve_ccg(
    case: DispatchCase,
    mode: str = "mapping",
    eps: Optional[float] = None,
    rel_gap: Optional[float] = None,
    iter_cap: Optional[int] = None,
    frozen_tau: Optional[Sequence[float]] = None,
    solver: Optional[SolverParams] = None,
    commit_both: bool = False,
) -> SolveReport:
    """Run the cutting loop until the bound gap closes.

    frozen_tau pins the accuracies (static uncertainty set), which makes
    both modes coincide with the classic algorithm. commit_both also
    prices infeasible candidates and commits the cost-side deviation in
    the same iteration.
    """
    report = validate_case(case)
    if not report.ok:
        raise ValueError("invalid case: " + "; ".join(report.violations))
    opts = case.options
    eps = eps if eps is not None else opts.eps
    rel_gap = rel_gap if rel_gap is not None else opts.rel_gap
    iter_cap = iter_cap if iter_cap is not None else opts.iter_cap
    solver = solver or SolverParams()
    canon = canonicalize(case)
    frozen = None if frozen_tau is None else np.asarray(frozen_tau, dtype=float)

    state = MasterState()
    seen_signatures: set[tuple] = set()
    records: list[IterationRecord] = []
    ub_best = math.inf
    incumbent: Optional[_Incumbent] = None
    lb = -math.inf
    termination = "iter_cap"
    # pinned accuracies put a constant payment outside the master objective
    frozen_pay = 0.0 if frozen is None else float(_exact_payments(case, frozen).sum())

    def finish(term: str) -> SolveReport:
        x = tau = pay = widths = None
        obj = sp_val = slack_inc = tol_inc = None
        if incumbent is not None:
            x = _first_stage_from_vec(case, incumbent.x_vec, incumbent.tau,
                                      incumbent.payments)
            tau = incumbent.tau
            pay = incumbent.payments
            widths = incumbent.half_widths
            obj = incumbent.total
            sp_val = incumbent.sp_value
            slack_inc = incumbent.fc_slack
            tol_inc = incumbent.feas_tol
        return SolveReport(
            mode=mode, termination=term, objective=obj,
            lower_bound=lb, upper_bound=ub_best,
            eps=_gap_threshold(eps, rel_gap, ub_best),
            x=x, accuracies=tau, payments=pay, half_widths=widths,
            worst_case_cost=sp_val, robust_slack=slack_inc,
            robust_feas_tol=tol_inc, iterations=tuple(records),
            frozen_tau=frozen,
        )

    for k in range(1, iter_cap + 1):
        mp, idx = build_mp(case, canon, state, mode=mode, frozen_tau=frozen)
        mpsol = mp.solve(solver)
        if mpsol.status == "Infeasible":
            termination = "infeasible"
            return finish(termination)
        if not mpsol.optimal:
            raise SolverFailure(f"master problem: {mpsol.status} ({mpsol.message})")
        lb = max(lb, float(mpsol.objective) + frozen_pay)
        x_vec = np.concatenate([mpsol["p"], mpsol["r_up"], mpsol["r_dn"]])
        if frozen is not None:
            tau = frozen.copy()
            pay_master = _exact_payments(case, tau)
            center_residual = 0.0
            drift_l1 = 0.0
        else:
            widths_val = mpsol["half_width"]
            tau = np.array([tau_of_width(case, i, widths_val[i])
                            for i in range(case.n_agents)])
            pay_master = mpsol["pred_cost"].copy()
            centers_opt = mpsol["center"].reshape(case.n_agents, case.horizon)
            curve = ((1.0 - tau)[:, None] * case.prior_mean_matrix()
                     + tau[:, None] * case.prediction_matrix())
            center_residual = float(np.abs(centers_opt - curve).max())
            drift_l1 = float(np.abs(centers_opt - curve).sum())
        uset = build_set(case, tau)
        feas_tol = opts.feas_tol + 1.05 * _drift_slack_bound(canon, drift_l1)

        fc, _ = build_fc(canon, case, x_vec, uset, opts.big_m_override)
        fcsol = fc.solve(solver)
        if not fcsol.optimal:
            raise SolverFailure(f"feasibility check: {fcsol.status} ({fcsol.message})")
        slack = float(fcsol.objective)

        if slack > feas_tol:
            phi_raw = fcsol["phi"].reshape(case.n_agents, case.horizon)
            sig = extract_signature(phi_raw, uset)
            if mode == "mapping" and frozen is None:
                if sig.key() in seen_signatures:
                    records.append(IterationRecord(
                        k, lb, ub_best, slack, "FeasCut", sig.phi, None,
                        center_residual, mpsol.wall_time, fcsol.wall_time, 0.0))
                    termination = "stalled"
                    return finish(termination)
                seen_signatures.add(sig.key())
                state = replace(state, signatures=state.signatures + (sig,))
            else:
                u_num = uset.corner(sig.phi)
                state = replace(state, scenarios=state.scenarios + (u_num,),
                                signatures=state.signatures + (sig,))
            records.append(IterationRecord(
                k, lb, ub_best, slack, "FeasCut", sig.phi,
                None if (mode == "mapping" and frozen is None) else uset.corner(sig.phi),
                center_residual, mpsol.wall_time, fcsol.wall_time, 0.0))
            if commit_both:
                # optionally also price this candidate and commit the
                # cost-side deviation in the same pass
                sp, _ = build_sp(canon, case, x_vec, uset, opts.big_m_override)
                spsol = sp.solve(solver)
                if spsol.optimal:
                    sig2 = extract_signature(
                        spsol["phi"].reshape(case.n_agents, case.horizon), uset
                    )
                    if mode == "mapping" and frozen is None:
                        if sig2.key() not in seen_signatures:
                            seen_signatures.add(sig2.key())
                            state = replace(
                                state, signatures=state.signatures + (sig2,)
                            )
                    else:
                        state = replace(
                            state,
                            scenarios=state.scenarios + (uset.corner(sig2.phi),),
                            signatures=state.signatures + (sig2,),
                        )
            continue

        sp, _ = build_sp(canon, case, x_vec, uset, opts.big_m_override)
        spsol = sp.solve(solver)
        if not spsol.optimal:
            raise SolverFailure(f"subproblem: {spsol.status} ({spsol.message})")
        sp_value = float(spsol.objective)
        f_val = float(x_vec @ _first_stage_cost_vector(case))
        ub_cand = f_val + float(pay_master.sum()) + sp_value
        if ub_cand < ub_best:
            ub_best = ub_cand
            pay_exact = _exact_payments(case, tau) if frozen is None else pay_master
            incumbent = _Incumbent(
                x_vec=x_vec, tau=tau, payments=pay_exact,
                half_widths=uset.half_widths.copy(), sp_value=sp_value,
                total=f_val + float(pay_exact.sum()) + sp_value,
                fc_slack=slack, feas_tol=feas_tol,
            )

        gap = ub_best - lb
        threshold = _gap_threshold(eps, rel_gap, ub_best)
        phi_raw = spsol["phi"].reshape(case.n_agents, case.horizon)
        sig = extract_signature(phi_raw, uset)
        if gap <= threshold:
            records.append(IterationRecord(
                k, lb, ub_best, slack, "Converged", None, None,
                center_residual, mpsol.wall_time, fcsol.wall_time, spsol.wall_time))
            termination = "converged"
            return finish(termination)

        if mode == "mapping" and frozen is None:
            if sig.key() in seen_signatures:
                records.append(IterationRecord(
                    k, lb, ub_best, slack, "OptCut", sig.phi, None,
                    center_residual, mpsol.wall_time, fcsol.wall_time, spsol.wall_time))
                termination = "stalled"
                return finish(termination)
            seen_signatures.add(sig.key())
            state = replace(state, signatures=state.signatures + (sig,))
            scen = None
        else:
            scen = uset.corner(sig.phi)
            state = replace(state, scenarios=state.scenarios + (scen,),
                            signatures=state.signatures + (sig,))
        records.append(IterationRecord(
            k, lb, ub_best, slack, "OptCut", sig.phi, scen,
            center_residual, mpsol.wall_time, fcsol.wall_time, spsol.wall_time))

    return finish(termination)


def _first_stage_cost_vector(case: DispatchCase) -> np.ndarray:
    J, T = case.n_gen, case.horizon
    vec = np.empty(3 * J * T)
    for j, g in enumerate(case.generators):
        vec[j * T: (j + 1) * T] = g.output_cost
        vec[J * T + j * T: J * T + (j + 1) * T] = g.reserve_up_cost
        vec[2 * J * T + j * T: 2 * J * T + (j + 1) * T] = g.reserve_down_cost
    return vec


def solve_mapping_ccg(case: DispatchCase, **kwargs) -> SolveReport:
    """Mapping-based variant: cuts follow the decision-dependent set."""
    return solve_ccg(case, mode="mapping", **kwargs)


def solve_traditional_ccg(case: DispatchCase, **kwargs) -> SolveReport:
    """Comparison variant: cuts pin the numeric worst-case scenario."""
    return solve_ccg(case, mode="traditional", **kwargs)

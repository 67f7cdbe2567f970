"""Independent verification oracles and out-of-sample evaluation.

Everything here deliberately avoids the KKT/big-M route: vertices of the
unit-deviation polytope are enumerated combinatorially and recourse
problems are plain LPs, so these paths can certify the MIP formulations.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .formulations import CanonicalTwoStage, build_first_stage, canonicalize
from .fusion import DduUncertaintySet, build_set, prediction_cost
from .milp import EQ, LE
from .model import DispatchCase, FirstStageDecision

VERTEX_DIM_GUARD = 8


@dataclass(frozen=True)
class VertexList:
    points: np.ndarray                # (count, I, T)
    budget_spatial: float
    budget_temporal: float

    @property
    def count(self) -> int:
        return self.points.shape[0]


def _w_polytope_vertices(I: int, T: int, gs: float, gt: float, tol: float = 1e-9) -> np.ndarray:
    """Vertices of the nonnegative-deviation polytope by basis enumeration.

    Pins a subset of coordinates to a box bound and solves the remaining
    square system given by tight budget rows; assignments of the pinned
    coordinates are batched per basis.
    """
    n = I * T
    budget_rows: list[np.ndarray] = []
    budget_rhs: list[float] = []
    for t in range(T):
        row = np.zeros(n)
        for i in range(I):
            row[i * T + t] = 1.0
        budget_rows.append(row)
        budget_rhs.append(gs)
    for i in range(I):
        row = np.zeros(n)
        row[i * T: (i + 1) * T] = 1.0
        budget_rows.append(row)
        budget_rhs.append(gt)
    mat = np.array(budget_rows)
    rhs = np.array(budget_rhs)
    nb = len(budget_rows)

    found: set[tuple] = set()
    cols = np.arange(n)
    for kb in range(0, min(n, nb) + 1):
        n_pin = n - kb
        pin_patterns = np.array(list(itertools.product((0.0, 1.0), repeat=n_pin)))
        for bsel in itertools.combinations(range(nb), kb):
            a_rows = mat[list(bsel)]
            b_vals = rhs[list(bsel)]
            for free in itertools.combinations(range(n), kb):
                free = list(free)
                pinned = np.setdiff1d(cols, free, assume_unique=True)
                if kb:
                    a_ff = a_rows[:, free]
                    if abs(np.linalg.det(a_ff)) < 1e-10:
                        continue
                    rhs_batch = b_vals[None, :] - pin_patterns @ a_rows[:, pinned].T
                    sols = np.linalg.solve(a_ff, rhs_batch.T).T
                else:
                    sols = np.zeros((pin_patterns.shape[0], 0))
                pts = np.empty((pin_patterns.shape[0], n))
                pts[:, pinned] = pin_patterns
                if kb:
                    pts[:, free] = sols
                ok = (
                    (pts >= -tol).all(axis=1)
                    & (pts <= 1.0 + tol).all(axis=1)
                    & (pts @ mat.T <= rhs[None, :] + tol).all(axis=1)
                )
                for p in pts[ok]:
                    found.add(tuple(np.round(p, 9)))
    return np.array(sorted(found)) if found else np.zeros((0, n))


def _is_polytope_vertex(phi: np.ndarray, I: int, T: int, gs: float, gt: float,
                        tol: float = 1e-7) -> bool:
    """Rank test: the active-constraint normals must pin every direction."""
    n = I * T
    eqs: list[np.ndarray] = []
    flat = phi.ravel()
    for k in range(n):
        if abs(abs(flat[k]) - 1.0) <= tol:
            e = np.zeros(n)
            e[k] = 1.0
            eqs.append(e)
    for t in range(T):
        idx = [i * T + t for i in range(I)]
        if sum(abs(flat[k]) for k in idx) >= gs - tol:
            row = np.zeros(n)
            for k in idx:
                if abs(flat[k]) <= tol:
                    e = np.zeros(n)
                    e[k] = 1.0
                    eqs.append(e)
                else:
                    row[k] = math.copysign(1.0, flat[k])
            eqs.append(row)
    for i in range(I):
        idx = [i * T + t for t in range(T)]
        if sum(abs(flat[k]) for k in idx) >= gt - tol:
            row = np.zeros(n)
            for k in idx:
                if abs(flat[k]) <= tol:
                    e = np.zeros(n)
                    e[k] = 1.0
                    eqs.append(e)
                else:
                    row[k] = math.copysign(1.0, flat[k])
            eqs.append(row)
    if not eqs:
        return False
    return np.linalg.matrix_rank(np.array(eqs), tol=1e-9) == n


def enumerate_vertices(I: int, T: int, gs: float, gt: float) -> VertexList:
    """Exact vertex set of the unit-deviation polytope for small dimensions."""
    if I * T > VERTEX_DIM_GUARD:
        raise ValueError(f"vertex enumeration guarded to {VERTEX_DIM_GUARD} dimensions")
    w_verts = _w_polytope_vertices(I, T, gs, gt)
    out: set[tuple] = set()
    for w in w_verts:
        support = np.nonzero(w > 1e-9)[0]
        for signs in itertools.product((-1.0, 1.0), repeat=len(support)):
            phi = w.copy()
            phi[support] *= np.array(signs)
            if _is_polytope_vertex(phi, I, T, gs, gt):
                out.add(tuple(np.round(phi, 9)))
    pts = np.array(sorted(out)) if out else np.zeros((0, I * T))
    return VertexList(points=pts.reshape(-1, I, T), budget_spatial=gs, budget_temporal=gt)


# -- recourse LPs over enumerated vertices ----------------------------------------


@dataclass(frozen=True)
class BilevelResult:
    value: Optional[float]            # worst-case recourse cost; None when infeasible
    worst_phi: Optional[np.ndarray]
    infeasible_phis: tuple[np.ndarray, ...]

    @property
    def feasible(self) -> bool:
        return not self.infeasible_phis


def _recourse_lp(canon: CanonicalTwoStage, rhs: np.ndarray):
    return linprog(
        c=canon.c,
        A_ub=canon.B,
        b_ub=rhs,
        bounds=[(None, None)] * canon.ny,
        method="highs",
    )


def exact_bilevel(
    canon: CanonicalTwoStage,
    x_vec: np.ndarray,
    uset: DduUncertaintySet,
    vertices: Optional[VertexList] = None,
) -> BilevelResult:
    """Worst-case recourse value by explicit vertex enumeration.

    The recourse value is convex in the uncertainty and the feasible-u set
    is a projection of a polyhedron, so checking the vertices settles both
    the maximum and feasibility over the whole set.
    """
    I, T = uset.n_agents, uset.n_periods
    if vertices is None:
        vertices = enumerate_vertices(I, T, uset.budget_spatial, uset.budget_temporal)
    best: Optional[float] = None
    worst_phi: Optional[np.ndarray] = None
    infeasible: list[np.ndarray] = []
    for phi in vertices.points:
        u = uset.corner(phi)
        res = _recourse_lp(canon, canon.recourse_rhs(x_vec, u.ravel()))
        if res.status == 2:
            infeasible.append(phi)
            continue
        if res.status != 0:
            raise RuntimeError(f"recourse LP returned status {res.status}")
        val = float(res.fun)
        if best is None or val > best:
            best = val
            worst_phi = phi
    if infeasible:
        return BilevelResult(None, None, tuple(infeasible))
    return BilevelResult(best, worst_phi, ())


@dataclass(frozen=True)
class FullSolveResult:
    best_tau: Optional[np.ndarray]
    best_value: Optional[float]
    grid: tuple[tuple[tuple[float, ...], Optional[float]], ...]  # (tau, value|None)
    argmin_neighbor_gap: float = 0.0  # grid resolution at the reported optimum


def width_tau_grid(case: DispatchCase, n: int) -> np.ndarray:
    """Accuracy grid spaced uniformly in half-width.

    The set geometry is affine in the half-width, so this spacing keeps
    the objective's grid resolution even where tau compresses.
    """
    s = np.linspace(math.sqrt(1.0 - case.options.tau_max), 1.0, n)
    return np.unique(np.clip(1.0 - s**2, 0.0, case.options.tau_max))


class _FullLP:
    """One scenario-embedded LP; only the rhs moves with the accuracies."""

    def __init__(self, case: DispatchCase, canon: CanonicalTwoStage, vertices: VertexList):
        I, T = case.n_agents, case.horizon
        nx, ny, nv = canon.nx, canon.ny, vertices.count
        n_cols = nx + 1 + nv * ny     # x | z | y blocks
        self.case, self.canon, self.vertices = case, canon, vertices
        self.z_col = nx

        obj = np.zeros(n_cols)
        for j, g in enumerate(case.generators):
            for t in range(T):
                obj[canon.x_p(j, t)] = g.output_cost
                obj[canon.x_rup(j, t)] = g.reserve_up_cost
                obj[canon.x_rdn(j, t)] = g.reserve_down_cost
        obj[self.z_col] = 1.0
        self.obj = obj

        bounds: list[tuple[Optional[float], Optional[float]]] = []
        for j, g in enumerate(case.generators):
            bounds += [(0.0, g.p_max)] * T
        for j, g in enumerate(case.generators):
            bounds += [(0.0, g.reserve_up_cap)] * T
        for j, g in enumerate(case.generators):
            bounds += [(0.0, g.reserve_down_cap)] * T
        bounds.append((0.0, None))
        bounds += [(None, None)] * (nv * ny)
        self.bounds = bounds

        xrows = build_first_stage(case, canon)
        ub_rows, eq_rows = [], []
        self.ub_base, self.eq_base = [], []
        self.ub_center_coef, self.eq_center_coef = [], []
        for row in xrows:
            vec = np.zeros(n_cols)
            for col, coef in row.x_coeffs.items():
                vec[col] = coef
            cvec = np.zeros(I * T)
            for (i, t), coef in row.center_coeffs.items():
                cvec[i * T + t] = coef
            if row.sense == EQ:
                eq_rows.append(vec)
                self.eq_base.append(row.rhs)
                self.eq_center_coef.append(cvec)
            elif row.sense == LE:
                ub_rows.append(vec)
                self.ub_base.append(row.rhs)
                self.ub_center_coef.append(cvec)
            else:
                ub_rows.append(-vec)
                self.ub_base.append(-row.rhs)
                self.ub_center_coef.append(-cvec)
        n_x_ub = len(ub_rows)
        for v in range(nv):
            off = nx + 1 + v * ny
            vec = np.zeros(n_cols)
            vec[off: off + ny] = canon.c
            vec[self.z_col] = -1.0
            ub_rows.append(vec)
            block = np.zeros((canon.n_rows, n_cols))
            block[:, :nx] = canon.A
            block[:, off: off + ny] = canon.B
            ub_rows.extend(block)
        self.A_ub = np.array(ub_rows)
        self.A_eq = np.array(eq_rows) if eq_rows else None
        self.n_x_ub = n_x_ub

    def solve_at(self, tau: np.ndarray) -> Optional[float]:
        case, canon = self.case, self.canon
        uset = build_set(case, tau)
        centers = uset.centers.ravel()
        b_ub = list(np.asarray(self.ub_base) + np.array(
            [-(c @ centers) for c in self.ub_center_coef]
        )) if self.ub_base else []
        for phi in self.vertices.points:
            u = uset.corner(phi).ravel()
            b_ub.append(0.0)
            b_ub.extend(canon.q - canon.D @ u)
        b_eq = None
        if self.A_eq is not None:
            b_eq = np.asarray(self.eq_base) - np.array(
                [c @ centers for c in self.eq_center_coef]
            )
        res = linprog(
            c=self.obj, A_ub=self.A_ub, b_ub=np.asarray(b_ub),
            A_eq=self.A_eq, b_eq=b_eq, bounds=self.bounds, method="highs",
        )
        if res.status == 2:
            return None
        if res.status != 0:
            raise RuntimeError(f"full LP returned status {res.status}")
        cap = case.options.tau_max
        return float(res.fun) + sum(
            prediction_cost(min(float(t_i), cap), case.agents[i].prior_variance,
                            case.m_hat)
            for i, t_i in enumerate(tau)
        )


def exact_full(
    case: DispatchCase,
    tau_grid: np.ndarray,
    refine: int = 0,
) -> FullSolveResult:
    """Global optimum over accuracies and dispatch by grid search.

    Every vertex is embedded as an explicit scenario in one LP per grid
    point, so no decomposition or big-M enters this path. With refine > 0
    the neighborhood of the argmin is re-gridded that many points per
    agent for one extra pass.
    """
    if case.n_agents > 2:
        raise ValueError("full grid oracle supports at most two agents")
    I, T = case.n_agents, case.horizon
    canon = canonicalize(case)
    uset0 = build_set(case, [0.0] * I)
    vertices = enumerate_vertices(I, T, uset0.budget_spatial, uset0.budget_temporal)
    lp = _FullLP(case, canon, vertices)

    taus = np.unique(np.asarray(tau_grid, dtype=float))
    if ((taus < 0) | (taus > case.options.tau_max + 1e-15)).any():
        raise ValueError("tau grid outside [0, tau_max]")

    results: list[tuple[tuple[float, ...], Optional[float]]] = []
    values: dict[tuple, Optional[float]] = {}

    def run_pass(axes: list[np.ndarray]):
        best_t, best_v = None, None
        for combo in itertools.product(*axes):
            tau = np.array(combo)
            key = tuple(tau)
            if key in values:
                total = values[key]
            else:
                total = lp.solve_at(tau)
                values[key] = total
                results.append((key, total))
            if total is not None and (best_v is None or total < best_v):
                best_v, best_t = total, tau
        return best_t, best_v

    def neighbor_gap(axes: list[np.ndarray], best: np.ndarray, best_v: float) -> float:
        gap = 0.0
        for d in range(I):
            pos = int(np.argmin(np.abs(axes[d] - best[d])))
            for step in (-1, 1):
                j = pos + step
                if 0 <= j < len(axes[d]):
                    nb = best.copy()
                    nb[d] = axes[d][j]
                    v = values.get(tuple(nb))
                    if v is not None:
                        gap = max(gap, abs(v - best_v))
        return gap

    axes = [taus.copy() for _ in range(I)]
    best_tau, best_val = run_pass(axes)
    gap = 0.0
    if best_tau is not None:
        gap = neighbor_gap(axes, best_tau, best_val)
        if refine > 1:
            step = float(np.diff(taus).max()) if len(taus) > 1 else 0.0
            if step > 0:
                axes = [
                    np.unique(np.clip(np.linspace(b - step, b + step, refine),
                                      0.0, case.options.tau_max))
                    for b in best_tau
                ]
                t2, v2 = run_pass(axes)
                if t2 is not None:
                    best_tau, best_val = t2, v2
                    gap = neighbor_gap(axes, best_tau, best_val)
    return FullSolveResult(best_tau=best_tau, best_value=best_val,
                           grid=tuple(results), argmin_neighbor_gap=gap)


# -- out-of-sample Monte Carlo -------------------------------------------------------


@dataclass(frozen=True)
class OosResult:
    distribution: str
    std_multiplier: float
    n_scenarios: int
    recourse_costs: np.ndarray        # per feasible scenario, $
    feasible_mask: np.ndarray         # per scenario
    first_stage_cost: float
    payments_total: float
    infeasible_count: int
    average_total_cost: float         # mean over feasible scenarios unless penalized


def oos_evaluate(
    case: DispatchCase,
    x: FirstStageDecision,
    distribution: str,
    std_multiplier: float,
    n: int,
    seed: int,
    center_on: str = "truth",
    infeasible_penalty: Optional[float] = None,
    accuracies_for_std: Optional[np.ndarray] = None,
    canon: Optional[CanonicalTwoStage] = None,
) -> OosResult:
    """Sample uncertainty realizations and price the re-dispatch for each.

    Scenario standard deviation is the conditional (post-purchase) residual
    scaled by the multiplier; the mean is the hindsight truth by default.
    Passing accuracies_for_std evaluates a decision under another
    solution's scenario distribution, e.g. to compare strategies on
    identical draws. Per-scenario draws come from streams keyed by
    (seed, index) so the evaluation order cannot matter.
    """
    if distribution not in ("uniform", "gaussian"):
        raise ValueError("distribution must be 'uniform' or 'gaussian'")
    canon = canon or canonicalize(case)
    I, T = case.n_agents, case.horizon
    if center_on == "truth":
        centers = case.truth_matrix()
        if centers is None:
            raise ValueError("case has no truth series; use center_on='fused'")
    elif center_on == "fused":
        centers = build_set(case, x.accuracies).centers
    else:
        raise ValueError("center_on must be 'truth' or 'fused'")
    tau_std = x.accuracies if accuracies_for_std is None else np.asarray(accuracies_for_std)
    stds = np.sqrt(case.prior_variances() * (1.0 - tau_std)) * std_multiplier
    x_vec = np.concatenate([x.p.ravel(), x.r_up.ravel(), x.r_dn.ravel()])

    costs = np.full(n, np.nan)
    feasible = np.zeros(n, dtype=bool)
    for idx in range(n):
        rng = np.random.default_rng((seed, idx))
        if distribution == "uniform":
            noise = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=(I, T))
        else:
            noise = rng.standard_normal(size=(I, T))
        u = centers + stds[:, None] * noise
        res = _recourse_lp(canon, canon.recourse_rhs(x_vec, u.ravel()))
        if res.status == 0:
            costs[idx] = float(res.fun)
            feasible[idx] = True
        elif res.status != 2:
            raise RuntimeError(f"recourse LP returned status {res.status}")

    from .model import first_stage_cost as _fsc

    fixed = _fsc(case, x) - float(x.payments.sum())
    pay = float(x.payments.sum())
    n_bad = int((~feasible).sum())
    if infeasible_penalty is not None:
        filled = np.where(feasible, costs, infeasible_penalty)
        avg = fixed + pay + float(filled.mean())
    elif feasible.any():
        avg = fixed + pay + float(costs[feasible].mean())
    else:
        avg = math.inf
    return OosResult(
        distribution=distribution,
        std_multiplier=std_multiplier,
        n_scenarios=n,
        recourse_costs=costs,
        feasible_mask=feasible,
        first_stage_cost=fixed,
        payments_total=pay,
        infeasible_count=n_bad,
        average_total_cost=avg,
    )

"""Optimization problem builders.

Produces every model the solver loop needs from a dispatch case: the
recourse polytope in canonical (A, B, D, q, c) blocks, the first-stage
feasible set, the worst-case subproblem (SP) and feasibility check (FC)
via KKT conditions with big-M complementarity, and the master problem
with committed deviation signatures kept valid as the set moves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fusion import DduUncertaintySet, build_set
from .milp import (
    EQ,
    GE,
    LE,
    BIG_M_CEIL,
    BIG_M_FLOOR,
    InterpolationGrid,
    LinearModel,
    add_complementarity,
    add_interpolation_grid,
    bigm_for_row,
    grid_output,
)
from .model import DispatchCase, FirstStageDecision, SecondStageDecision


# -- canonical two-stage blocks ------------------------------------------------


@dataclass(frozen=True)
class CanonicalTwoStage:
    """Recourse feasible set {y : A x + B y + D u <= q} with cost c."""

    A: np.ndarray                     # (m, nx)
    B: np.ndarray                     # (m, ny)
    D: np.ndarray                     # (m, nu)
    q: np.ndarray                     # (m,)
    c: np.ndarray                     # (ny,)
    row_labels: tuple[str, ...]
    n_gen: int
    n_agents: int
    horizon: int
    res_positions: tuple[int, ...]    # agent indices holding curtailment vars

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def nx(self) -> int:
        return self.A.shape[1]

    @property
    def ny(self) -> int:
        return self.B.shape[1]

    @property
    def nu(self) -> int:
        return self.D.shape[1]

    # x layout: p | r_up | r_dn, each (J, T) flattened row-major
    def x_p(self, j: int, t: int) -> int:
        return j * self.horizon + t

    def x_rup(self, j: int, t: int) -> int:
        return self.n_gen * self.horizon + j * self.horizon + t

    def x_rdn(self, j: int, t: int) -> int:
        return 2 * self.n_gen * self.horizon + j * self.horizon + t

    # y layout: p_up | p_dn | curtail
    def y_up(self, j: int, t: int) -> int:
        return j * self.horizon + t

    def y_dn(self, j: int, t: int) -> int:
        return self.n_gen * self.horizon + j * self.horizon + t

    def y_curt(self, res_pos: int, t: int) -> int:
        return 2 * self.n_gen * self.horizon + res_pos * self.horizon + t

    def u_col(self, i: int, t: int) -> int:
        return i * self.horizon + t

    def pack_x(self, x: FirstStageDecision) -> np.ndarray:
        return np.concatenate([x.p.ravel(), x.r_up.ravel(), x.r_dn.ravel()])

    def unpack_y(self, y: np.ndarray) -> SecondStageDecision:
        J, T = self.n_gen, self.horizon
        nr = len(self.res_positions)
        return SecondStageDecision(
            p_up=y[: J * T].reshape(J, T).copy(),
            p_dn=y[J * T : 2 * J * T].reshape(J, T).copy(),
            curtail=y[2 * J * T : 2 * J * T + nr * T].reshape(nr, T).copy(),
        )

    def recourse_rhs(self, x_vec: np.ndarray, u_vec: np.ndarray) -> np.ndarray:
        """q - A x - D u: rhs of the inner problem for fixed x and u."""
        return self.q - self.A @ x_vec - self.D @ u_vec


def canonicalize(case: DispatchCase) -> CanonicalTwoStage:
    """Emit the re-dispatch constraint blocks row by row.

    Equalities appear as paired inequalities so feasibility slacks cover
    them symmetrically. Curtailment variables exist only for RES agents.
    """
    J, T, I, L = case.n_gen, case.horizon, case.n_agents, case.n_lines
    res = case.res_indices
    nr = len(res)
    res_pos = {i: k for k, i in enumerate(res)}
    nx = 3 * J * T
    ny = 2 * J * T + nr * T
    nu = I * T

    rows_A: list[np.ndarray] = []
    rows_B: list[np.ndarray] = []
    rows_D: list[np.ndarray] = []
    q: list[float] = []
    labels: list[str] = []

    skel = CanonicalTwoStage(
        A=np.zeros((0, nx)), B=np.zeros((0, ny)), D=np.zeros((0, nu)),
        q=np.zeros(0), c=np.zeros(ny), row_labels=(),
        n_gen=J, n_agents=I, horizon=T, res_positions=res,
    )

    def emit(a, b, d, rhs, label):
        rows_A.append(a)
        rows_B.append(b)
        rows_D.append(d)
        q.append(rhs)
        labels.append(label)

    for j in range(J):
        for t in range(T):
            a = np.zeros(nx); b = np.zeros(ny); d = np.zeros(nu)
            b[skel.y_up(j, t)] = 1.0
            a[skel.x_rup(j, t)] = -1.0
            emit(a, b, d, 0.0, f"adj_up_cap[{j},{t}]")
            a = np.zeros(nx); b = np.zeros(ny); d = np.zeros(nu)
            b[skel.y_up(j, t)] = -1.0
            emit(a, b, d, 0.0, f"adj_up_lo[{j},{t}]")
            a = np.zeros(nx); b = np.zeros(ny); d = np.zeros(nu)
            b[skel.y_dn(j, t)] = 1.0
            a[skel.x_rdn(j, t)] = -1.0
            emit(a, b, d, 0.0, f"adj_dn_cap[{j},{t}]")
            a = np.zeros(nx); b = np.zeros(ny); d = np.zeros(nu)
            b[skel.y_dn(j, t)] = -1.0
            emit(a, b, d, 0.0, f"adj_dn_lo[{j},{t}]")

    for t in range(T):
        a = np.zeros(nx); b = np.zeros(ny); d = np.zeros(nu)
        for j in range(J):
            a[skel.x_p(j, t)] = 1.0
            b[skel.y_up(j, t)] = 1.0
            b[skel.y_dn(j, t)] = -1.0
        for i in range(I):
            sign = 1.0 if case.agents[i].kind == "res" else -1.0
            d[skel.u_col(i, t)] = sign
            if sign > 0:
                b[skel.y_curt(res_pos[i], t)] = -1.0
        emit(a.copy(), b.copy(), d.copy(), 0.0, f"balance_up[{t}]")
        emit(-a, -b, -d, 0.0, f"balance_dn[{t}]")

    for i in res:
        for t in range(T):
            a = np.zeros(nx); b = np.zeros(ny); d = np.zeros(nu)
            b[skel.y_curt(res_pos[i], t)] = 1.0
            d[skel.u_col(i, t)] = -1.0
            emit(a, b, d, 0.0, f"curtail_cap[{i},{t}]")
            a = np.zeros(nx); b = np.zeros(ny); d = np.zeros(nu)
            b[skel.y_curt(res_pos[i], t)] = -1.0
            emit(a, b, d, 0.0, f"curtail_lo[{i},{t}]")

    for l in range(L):
        cap = case.lines[l].capacity
        for t in range(T):
            a = np.zeros(nx); b = np.zeros(ny); d = np.zeros(nu)
            for j, g in enumerate(case.generators):
                pf = g.ptdf[l]
                a[skel.x_p(j, t)] += pf
                b[skel.y_up(j, t)] += pf
                b[skel.y_dn(j, t)] -= pf
            for i, ag in enumerate(case.agents):
                pf = ag.ptdf[l]
                sign = 1.0 if ag.kind == "res" else -1.0
                d[skel.u_col(i, t)] += sign * pf
                if ag.kind == "res":
                    b[skel.y_curt(res_pos[i], t)] -= pf
            emit(a.copy(), b.copy(), d.copy(), cap, f"flow_up[{l},{t}]")
            emit(-a, -b, -d, cap, f"flow_dn[{l},{t}]")

    c = np.zeros(ny)
    for j, g in enumerate(case.generators):
        for t in range(T):
            c[skel.y_up(j, t)] = g.adjust_up_cost
            c[skel.y_dn(j, t)] = g.adjust_down_cost
    for i in res:
        for t in range(T):
            c[skel.y_curt(res_pos[i], t)] = case.curtailment_penalty

    return CanonicalTwoStage(
        A=np.array(rows_A), B=np.array(rows_B), D=np.array(rows_D),
        q=np.array(q), c=c, row_labels=tuple(labels),
        n_gen=J, n_agents=I, horizon=T, res_positions=res,
    )


def second_stage_value(canon: CanonicalTwoStage, y: np.ndarray) -> float:
    return float(canon.c @ y)


# -- first-stage feasible set ---------------------------------------------------


@dataclass(frozen=True)
class XRow:
    """One first-stage constraint; center coefficients stay symbolic so the
    master can wire them to variables while oracles substitute numbers."""

    x_coeffs: dict[int, float]
    center_coeffs: dict[tuple[int, int], float]   # (agent, period) -> coef
    sense: str
    rhs: float
    label: str


def build_first_stage(case: DispatchCase, canon: Optional[CanonicalTwoStage] = None) -> list[XRow]:
    canon = canon or canonicalize(case)
    J, T, L = case.n_gen, case.horizon, case.n_lines
    rows: list[XRow] = []

    for t in range(T):
        xc = {canon.x_p(j, t): 1.0 for j in range(J)}
        uc = {}
        for i, ag in enumerate(case.agents):
            uc[(i, t)] = 1.0 if ag.kind == "res" else -1.0
        rows.append(XRow(xc, uc, EQ, 0.0, f"x_balance[{t}]"))

    for j, g in enumerate(case.generators):
        for t in range(T):
            theta = g.on_status[t]
            rows.append(XRow(
                {canon.x_rup(j, t): 1.0}, {}, LE, g.reserve_up_cap * theta,
                f"x_rup_cap[{j},{t}]"))
            rows.append(XRow(
                {canon.x_rdn(j, t): 1.0}, {}, LE, g.reserve_down_cap * theta,
                f"x_rdn_cap[{j},{t}]"))
            rows.append(XRow(
                {canon.x_p(j, t): 1.0, canon.x_rup(j, t): 1.0}, {}, LE,
                g.p_max * theta, f"x_pmax[{j},{t}]"))
            rows.append(XRow(
                {canon.x_p(j, t): -1.0, canon.x_rdn(j, t): 1.0}, {}, LE,
                -g.p_min * theta, f"x_pmin[{j},{t}]"))

    for j, g in enumerate(case.generators):
        for t in range(1, T):
            th_prev = g.on_status[t - 1]
            th_now = g.on_status[t]
            rows.append(XRow(
                {
                    canon.x_p(j, t): 1.0,
                    canon.x_rup(j, t): 1.0,
                    canon.x_p(j, t - 1): -1.0,
                    canon.x_rdn(j, t - 1): 1.0,
                },
                {}, LE, g.ramp_up * th_prev + g.p_max * (1 - th_prev),
                f"x_ramp_up[{j},{t}]"))
            rows.append(XRow(
                {
                    canon.x_p(j, t): -1.0,
                    canon.x_rdn(j, t): 1.0,
                    canon.x_p(j, t - 1): 1.0,
                    canon.x_rup(j, t - 1): 1.0,
                },
                {}, LE, g.ramp_down * th_now + g.p_max * (1 - th_now),
                f"x_ramp_dn[{j},{t}]"))

    for l in range(L):
        cap = case.lines[l].capacity
        for t in range(T):
            xc = {}
            for j, g in enumerate(case.generators):
                xc[canon.x_p(j, t)] = g.ptdf[l]
            uc = {}
            for i, ag in enumerate(case.agents):
                sign = 1.0 if ag.kind == "res" else -1.0
                uc[(i, t)] = sign * ag.ptdf[l]
            rows.append(XRow(dict(xc), dict(uc), LE, cap, f"x_flow_up[{l},{t}]"))
            rows.append(XRow({k: -v for k, v in xc.items()},
                             {k: -v for k, v in uc.items()}, LE, cap,
                             f"x_flow_dn[{l},{t}]"))
    return rows


def x_violations(
    case: DispatchCase,
    canon: CanonicalTwoStage,
    x_vec: np.ndarray,
    centers: np.ndarray,
    tol: float = 1e-6,
) -> list[str]:
    """First-stage rows violated at a concrete point (testing aid)."""
    bad = []
    for row in build_first_stage(case, canon):
        val = sum(coef * x_vec[col] for col, coef in row.x_coeffs.items())
        val += sum(coef * centers[i, t] for (i, t), coef in row.center_coeffs.items())
        if row.sense == EQ and abs(val - row.rhs) > tol:
            bad.append(row.label)
        elif row.sense == LE and val > row.rhs + tol:
            bad.append(row.label)
        elif row.sense == GE and val < row.rhs - tol:
            bad.append(row.label)
    return bad


# -- adversarial subproblems (SP and FC) ---------------------------------------


@dataclass(frozen=True)
class AdversarialIndex:
    y: tuple[int, ...]
    dual: tuple[int, ...]
    phi: tuple[int, ...]
    psi: tuple[int, ...]
    slack: tuple[int, ...] = ()       # FC only
    mu: tuple[int, ...] = ()          # FC only


def _dual_bound(canon: CanonicalTwoStage, override: Optional[float]) -> float:
    if override is not None:
        return override
    total = float(np.abs(canon.c).sum())
    return min(max(BIG_M_FLOOR, 50.0 * max(total, 1.0)), BIG_M_CEIL)


def _y_bounds(
    canon: CanonicalTwoStage, case: DispatchCase, x_vec: np.ndarray, uset: DduUncertaintySet
) -> list[tuple[float, float]]:
    """Boxes matching the recourse rows, used for big-M propagation."""
    J, T = canon.n_gen, canon.horizon
    bounds: list[tuple[float, float]] = [(0.0, 0.0)] * canon.ny
    for j in range(J):
        for t in range(T):
            bounds[canon.y_up(j, t)] = (0.0, max(0.0, x_vec[canon.x_rup(j, t)]))
            bounds[canon.y_dn(j, t)] = (0.0, max(0.0, x_vec[canon.x_rdn(j, t)]))
    for k, i in enumerate(canon.res_positions):
        for t in range(T):
            hi = max(0.0, uset.centers[i, t] + uset.half_widths[i])
            bounds[canon.y_curt(k, t)] = (0.0, hi)
    return bounds


def _add_deviation_vars(
    model: LinearModel, canon: CanonicalTwoStage, uset: DduUncertaintySet
) -> tuple[list[int], list[int]]:
    """Normalized deviations with absolute-value split and both budgets."""
    I, T = canon.n_agents, canon.horizon
    phi = [model.add_var(f"phi[{i},{t}]", -1.0, 1.0) for i in range(I) for t in range(T)]
    psi = [model.add_var(f"psi[{i},{t}]", 0.0, 1.0) for i in range(I) for t in range(T)]
    for i in range(I):
        for t in range(T):
            k = i * T + t
            model.add_constr({phi[k]: 1.0, psi[k]: -1.0}, LE, 0.0, f"abs_up[{i},{t}]")
            model.add_constr({phi[k]: -1.0, psi[k]: -1.0}, LE, 0.0, f"abs_dn[{i},{t}]")
    for t in range(T):
        model.add_constr(
            {psi[i * T + t]: 1.0 for i in range(I)}, LE, uset.budget_spatial,
            f"budget_spatial[{t}]")
    for i in range(I):
        model.add_constr(
            {psi[i * T + t]: 1.0 for t in range(T)}, LE, uset.budget_temporal,
            f"budget_temporal[{i}]")
    return phi, psi


def build_sp(
    canon: CanonicalTwoStage,
    case: DispatchCase,
    x_vec: np.ndarray,
    uset: DduUncertaintySet,
    big_m_override: Optional[float] = None,
) -> tuple[LinearModel, AdversarialIndex]:
    """Worst-case recourse cost as one MIP via inner-problem KKT conditions."""
    model = LinearModel("sp", "max")
    ny, m = canon.ny, canon.n_rows
    ybounds = _y_bounds(canon, case, x_vec, uset)
    y = [model.add_var(f"y[{k}]", lo, hi) for k, (lo, hi) in enumerate(ybounds)]
    m_dual = _dual_bound(canon, big_m_override)
    lam = [model.add_var(f"dual[{r}]", 0.0, m_dual) for r in range(m)]
    phi, psi = _add_deviation_vars(model, canon, uset)

    for col in range(ny):
        coeffs = {lam[r]: canon.B[r, col] for r in range(m) if canon.B[r, col] != 0.0}
        model.add_constr(coeffs, EQ, -canon.c[col], f"stationarity[{col}]")

    base_rhs = canon.q - canon.A @ x_vec - canon.D @ uset.centers.ravel()
    dev_coef = canon.D * np.repeat(uset.half_widths, canon.horizon)[None, :]
    for r in range(m):
        coeffs: dict[int, float] = {}
        for col in range(ny):
            if canon.B[r, col] != 0.0:
                coeffs[y[col]] = canon.B[r, col]
        for k in range(canon.nu):
            if dev_coef[r, k] != 0.0:
                coeffs[phi[k]] = dev_coef[r, k]
        rhs = float(base_rhs[r])
        model.add_constr(coeffs, LE, rhs, f"primal[{r}]")
        m1 = big_m_override or bigm_for_row(model, coeffs, rhs)
        add_complementarity(model, coeffs, rhs, lam[r], (m1, m_dual), name=f"kkt[{r}]")

    model.set_objective({y[k]: canon.c[k] for k in range(ny)}, "max")
    model.add_group("y", y)
    model.add_group("dual", lam)
    model.add_group("phi", phi)
    model.add_group("psi", psi)
    return model, AdversarialIndex(tuple(y), tuple(lam), tuple(phi), tuple(psi))


def build_fc(
    canon: CanonicalTwoStage,
    case: DispatchCase,
    x_vec: np.ndarray,
    uset: DduUncertaintySet,
    big_m_override: Optional[float] = None,
) -> tuple[LinearModel, AdversarialIndex]:
    """Feasibility check: worst-case total constraint violation.

    Optimum 0 exactly when recourse stays feasible over the whole set.
    The dual rows pin both multiplier families to [0, 1], so their
    complementarity big-M is exact.
    """
    model = LinearModel("fc", "max")
    ny, m = canon.ny, canon.n_rows
    ybounds = _y_bounds(canon, case, x_vec, uset)
    y = [model.add_var(f"y[{k}]", lo, hi) for k, (lo, hi) in enumerate(ybounds)]
    lam = [model.add_var(f"dual[{r}]", 0.0, 1.0) for r in range(m)]
    mu = [model.add_var(f"mu[{r}]", 0.0, 1.0) for r in range(m)]
    phi, psi = _add_deviation_vars(model, canon, uset)

    base_rhs = canon.q - canon.A @ x_vec - canon.D @ uset.centers.ravel()
    dev_coef = canon.D * np.repeat(uset.half_widths, canon.horizon)[None, :]

    # violation headroom per row bounds the slack variable
    s: list[int] = []
    for r in range(m):
        worst = -float(base_rhs[r])
        for col in range(ny):
            coef = canon.B[r, col]
            if coef != 0.0:
                lo, hi = ybounds[col]
                worst += coef * (hi if coef > 0 else lo)
        for k in range(canon.nu):
            worst += abs(dev_coef[r, k])
        s_ub = max(0.0, worst) + BIG_M_FLOOR
        s.append(model.add_var(f"s[{r}]", 0.0, s_ub))

    for col in range(ny):
        coeffs = {lam[r]: canon.B[r, col] for r in range(m) if canon.B[r, col] != 0.0}
        model.add_constr(coeffs, EQ, 0.0, f"stationarity[{col}]")
    for r in range(m):
        model.add_constr({lam[r]: 1.0, mu[r]: 1.0}, EQ, 1.0, f"dual_split[{r}]")

    for r in range(m):
        coeffs = {}
        for col in range(ny):
            if canon.B[r, col] != 0.0:
                coeffs[y[col]] = canon.B[r, col]
        for k in range(canon.nu):
            if dev_coef[r, k] != 0.0:
                coeffs[phi[k]] = dev_coef[r, k]
        coeffs[s[r]] = -1.0
        rhs = float(base_rhs[r])
        model.add_constr(coeffs, LE, rhs, f"primal[{r}]")
        m1 = big_m_override or bigm_for_row(model, coeffs, rhs)
        add_complementarity(model, coeffs, rhs, lam[r], (m1, 1.0), name=f"kkt[{r}]")
        s_ub = model.variables[s[r]].ub
        add_complementarity(model, {s[r]: -1.0}, 0.0, mu[r], (s_ub, 1.0), name=f"kkt_s[{r}]")

    model.set_objective({v: 1.0 for v in s}, "max")
    model.add_group("y", y)
    model.add_group("dual", lam)
    model.add_group("mu", mu)
    model.add_group("phi", phi)
    model.add_group("psi", psi)
    model.add_group("slack", s)
    return model, AdversarialIndex(
        tuple(y), tuple(lam), tuple(phi), tuple(psi), tuple(s), tuple(mu)
    )


# -- worst-case signatures -------------------------------------------------------


@dataclass(frozen=True)
class VertexSignature:
    """Normalized worst-case deviation replayed as a mapping constraint."""

    phi: np.ndarray                   # (I, T)
    snapped: bool                     # True when every coordinate hit the lattice

    def key(self) -> tuple:
        return tuple(self.phi.ravel().tolist())


def _lattice_values(uset: DduUncertaintySet) -> np.ndarray:
    """Coordinate values a deviation vertex can take, with both signs."""
    cands = {0.0, 1.0}
    for g in (uset.budget_spatial, uset.budget_temporal):
        frac = g - math.floor(g)
        if frac > 1e-12:
            cands.add(frac)
        cands.add(min(1.0, g))
    vals = sorted(cands)
    return np.array(sorted({-v for v in vals} | set(vals)))


def extract_signature(
    phi_raw: np.ndarray,
    uset: DduUncertaintySet,
    snap_tol: float = 1e-5,
) -> VertexSignature:
    """Snap solver deviations onto the vertex-coordinate lattice.

    Coordinates further than snap_tol from every lattice value are kept
    exact and the signature is flagged. Zero-width agents always map to 0.
    """
    phi = np.asarray(phi_raw, dtype=float).reshape(uset.centers.shape).copy()
    lattice = _lattice_values(uset)
    snapped_all = True
    for i in range(phi.shape[0]):
        if uset.half_widths[i] < 1e-12:
            phi[i, :] = 0.0
            continue
        for t in range(phi.shape[1]):
            k = np.abs(lattice - phi[i, t]).argmin()
            if abs(lattice[k] - phi[i, t]) <= snap_tol:
                phi[i, t] = lattice[k]
            else:
                snapped_all = False
    if not uset.polytope().contains(phi, tol=max(1e-6, 4 * snap_tol)):
        raise ValueError("worst-case deviation lies outside the unit polytope")
    return VertexSignature(phi=phi, snapped=snapped_all)


# -- master problem ---------------------------------------------------------------


@dataclass(frozen=True)
class MpIndex:
    p: tuple[int, ...]
    r_up: tuple[int, ...]
    r_dn: tuple[int, ...]
    zeta: int
    half_width: tuple[int, ...]       # empty when accuracies are frozen
    center: tuple[int, ...]           # the replacement center variables
    gap: tuple[int, ...]
    penalty: tuple[int, ...]
    pred_cost: tuple[int, ...]
    cut_y: tuple[tuple[int, ...], ...]
    cut_u: tuple[tuple[int, ...], ...]
    width_grids: tuple[InterpolationGrid, ...]
    frozen_tau: Optional[np.ndarray] = None


@dataclass(frozen=True)
class MasterState:
    """Committed cuts plus bound bookkeeping across iterations."""

    signatures: tuple[VertexSignature, ...] = ()
    scenarios: tuple[np.ndarray, ...] = ()       # numeric cuts (traditional mode)
    lower_bound: float = -math.inf
    upper_bound: float = math.inf

    @property
    def n_cuts(self) -> int:
        return max(len(self.signatures), len(self.scenarios))


def width_range(case: DispatchCase, i: int) -> tuple[float, float]:
    """Feasible half-width interval implied by the accuracy cap."""
    var = case.agents[i].prior_variance
    hi = math.sqrt(var / (1.0 - case.delta))
    lo = math.sqrt(var * (1.0 - case.options.tau_max) / (1.0 - case.delta))
    return lo, hi


def tau_of_width(case: DispatchCase, i: int, width: float) -> float:
    var = case.agents[i].prior_variance
    return min(1.0, max(0.0, 1.0 - (1.0 - case.delta) * width**2 / var))


def build_mp(
    case: DispatchCase,
    canon: CanonicalTwoStage,
    state: MasterState,
    mode: str = "mapping",
    frozen_tau: Optional[Sequence[float]] = None,
) -> tuple[LinearModel, MpIndex]:
    """Master problem over first-stage decisions and purchased accuracies.

    The nonlinear prediction cost and the center curve are functions of a
    single per-agent half-width, so both ride one interpolation grid per
    agent. The replacement center variables are tied to the curve through
    the weighted quadratic gap penalty.
    """
    if mode not in ("mapping", "traditional"):
        raise ValueError("mode must be 'mapping' or 'traditional'")
    J, T, I = case.n_gen, case.horizon, case.n_agents
    priors = case.prior_mean_matrix()
    preds = case.prediction_matrix()
    variances = case.prior_variances()
    n_bp = case.options.mp_breakpoints
    model = LinearModel(f"mp[{state.n_cuts}]", "min")

    p = [model.add_var(f"p[{j},{t}]", 0.0, case.generators[j].p_max)
         for j in range(J) for t in range(T)]
    r_up = [model.add_var(f"r_up[{j},{t}]", 0.0, case.generators[j].reserve_up_cap)
            for j in range(J) for t in range(T)]
    r_dn = [model.add_var(f"r_dn[{j},{t}]", 0.0, case.generators[j].reserve_down_cap)
            for j in range(J) for t in range(T)]
    zeta = model.add_var("zeta", 0.0, math.inf)

    frozen = None if frozen_tau is None else np.asarray(frozen_tau, dtype=float)
    centers_const: Optional[np.ndarray] = None
    widths_const: Optional[np.ndarray] = None
    half_width: list[int] = []
    center_vars: list[int] = []
    gaps: list[int] = []
    penalties: list[int] = []
    pred_costs: list[int] = []
    grids: list[InterpolationGrid] = []

    if frozen is not None:
        centers_const = (1.0 - frozen)[:, None] * priors + frozen[:, None] * preds
        widths_const = np.sqrt(variances * (1.0 - frozen) / (1.0 - case.delta))
    else:
        m_hat = case.m_hat
        for i in range(I):
            lo, hi = width_range(case, i)
            grid = add_interpolation_grid(model, lo, hi, n_bp, adjacency=True,
                                          name=f"width[{i}]")
            grids.append(grid)
            half_width.append(grid_output(model, grid, grid.breakpoints, f"uh[{i}]"))
            hvals = m_hat * (
                1.0 / ((1.0 - case.delta) * grid.breakpoints**2) - 1.0 / variances[i]
            )
            pred_costs.append(grid_output(model, grid, hvals, f"hcost[{i}]"))
            shrink = (1.0 - case.delta) * grid.breakpoints**2 / variances[i]
            for t in range(T):
                curve = preds[i, t] + shrink * (priors[i, t] - preds[i, t])
                e_var = grid_output(model, grid, curve, f"center_curve[{i},{t}]")
                lo_c, hi_c = float(curve.min()), float(curve.max())
                ue = model.add_var(f"center[{i},{t}]", lo_c, hi_c)
                center_vars.append(ue)
                w = abs(priors[i, t] - preds[i, t])
                if w < 1e-9:
                    model.add_constr({ue: 1.0, e_var: -1.0}, EQ, 0.0,
                                     f"center_pin[{i},{t}]")
                    continue
                g = model.add_var(f"gap[{i},{t}]", -w, w)
                model.add_constr({g: 1.0, ue: -1.0, e_var: 1.0}, EQ, 0.0,
                                 f"gap_def[{i},{t}]")
                n_pen = n_bp if n_bp % 2 == 1 else n_bp + 1
                pen_grid = add_interpolation_grid(model, -w, w, n_pen, adjacency=False,
                                                  name=f"pen[{i},{t}]")
                model.add_constr(
                    {**{v: float(b) for v, b in zip(pen_grid.lam, pen_grid.breakpoints)},
                     g: -1.0}, EQ, 0.0, f"pen_in[{i},{t}]")
                pen = grid_output(model, pen_grid, pen_grid.breakpoints**2,
                                  f"pensq[{i},{t}]")
                gaps.append(g)
                penalties.append(pen)

    def center_var(i: int, t: int) -> int:
        return center_vars[i * T + t]

    xrows = build_first_stage(case, canon)
    xcols = p + r_up + r_dn
    for row in xrows:
        coeffs = {xcols[col]: coef for col, coef in row.x_coeffs.items()}
        rhs = row.rhs
        if frozen is not None:
            for (i, t), coef in row.center_coeffs.items():
                rhs -= coef * centers_const[i, t]
        else:
            for (i, t), coef in row.center_coeffs.items():
                coeffs[center_var(i, t)] = coeffs.get(center_var(i, t), 0.0) + coef
        model.add_constr(coeffs, row.sense, rhs, row.label)

    cut_y: list[tuple[int, ...]] = []
    cut_u: list[tuple[int, ...]] = []
    ny = canon.ny

    def add_cut_block(k: int, u_expr_numeric: Optional[np.ndarray],
                      sig: Optional[VertexSignature]) -> None:
        yb = []
        for col in range(ny):
            name = f"cut{k}.y[{col}]"
            if col < 2 * J * T:
                jj = (col % (J * T)) // T
                cap = (case.generators[jj].reserve_up_cap if col < J * T
                       else case.generators[jj].reserve_down_cap)
                yb.append(model.add_var(name, 0.0, cap))
            else:
                yb.append(model.add_var(name, 0.0, math.inf))
        model.add_constr(
            {**{yb[col]: canon.c[col] for col in range(ny) if canon.c[col] != 0.0},
             zeta: -1.0}, LE, 0.0, f"cut{k}.epigraph")
        uvars: list[int] = []
        if u_expr_numeric is not None:
            rhs_vec = canon.q - canon.D @ u_expr_numeric.ravel()
            for r in range(canon.n_rows):
                coeffs = {xcols[col]: canon.A[r, col]
                          for col in range(canon.nx) if canon.A[r, col] != 0.0}
                for col in range(ny):
                    if canon.B[r, col] != 0.0:
                        coeffs[yb[col]] = canon.B[r, col]
                model.add_constr(coeffs, LE, float(rhs_vec[r]), f"cut{k}.row[{r}]")
        else:
            lo_u = np.empty((I, T)); hi_u = np.empty((I, T))
            for i in range(I):
                _, w_hi = width_range(case, i)
                lo_c = min(priors[i].min(), preds[i].min())
                hi_c = max(priors[i].max(), preds[i].max())
                lo_u[i, :] = lo_c - w_hi
                hi_u[i, :] = hi_c + w_hi
            for i in range(I):
                for t in range(T):
                    uvars.append(model.add_var(f"cut{k}.u[{i},{t}]",
                                               float(lo_u[i, t]), float(hi_u[i, t])))
            for i in range(I):
                for t in range(T):
                    coeffs = {uvars[i * T + t]: 1.0, center_var(i, t): -1.0}
                    coef_w = -float(sig.phi[i, t])
                    if coef_w != 0.0:
                        coeffs[half_width[i]] = coef_w
                    model.add_constr(coeffs, EQ, 0.0, f"cut{k}.map[{i},{t}]")
            for r in range(canon.n_rows):
                coeffs = {xcols[col]: canon.A[r, col]
                          for col in range(canon.nx) if canon.A[r, col] != 0.0}
                for col in range(ny):
                    if canon.B[r, col] != 0.0:
                        coeffs[yb[col]] = canon.B[r, col]
                for k2 in range(canon.nu):
                    if canon.D[r, k2] != 0.0:
                        coeffs[uvars[k2]] = canon.D[r, k2]
                model.add_constr(coeffs, LE, float(canon.q[r]), f"cut{k}.row[{r}]")
        cut_y.append(tuple(yb))
        cut_u.append(tuple(uvars))

    if mode == "traditional" or frozen is not None:
        if frozen is not None and mode == "mapping":
            # static set: mapping constraints reduce to numeric scenarios
            for k, sig in enumerate(state.signatures):
                u_num = centers_const + widths_const[:, None] * sig.phi
                add_cut_block(k, u_num, None)
        else:
            for k, u_num in enumerate(state.scenarios):
                add_cut_block(k, np.asarray(u_num, dtype=float), None)
    else:
        for k, sig in enumerate(state.signatures):
            add_cut_block(k, None, sig)

    obj: dict[int, float] = {zeta: 1.0}
    for j, g in enumerate(case.generators):
        for t in range(T):
            obj[p[j * T + t]] = g.output_cost
            obj[r_up[j * T + t]] = g.reserve_up_cost
            obj[r_dn[j * T + t]] = g.reserve_down_cost
    for v in pred_costs:
        obj[v] = 1.0
    for v in penalties:
        obj[v] = case.mapping_penalty
    model.set_objective(obj, "min")

    model.add_group("p", p)
    model.add_group("r_up", r_up)
    model.add_group("r_dn", r_dn)
    model.add_group("zeta", [zeta])
    model.add_group("half_width", half_width)
    model.add_group("center", center_vars)
    model.add_group("pred_cost", pred_costs)
    model.add_group("penalty", penalties)
    for k, yb in enumerate(cut_y):
        model.add_group(f"cut_y[{k}]", yb)
    for k, ub in enumerate(cut_u):
        model.add_group(f"cut_u[{k}]", ub)

    return model, MpIndex(
        p=tuple(p), r_up=tuple(r_up), r_dn=tuple(r_dn), zeta=zeta,
        half_width=tuple(half_width), center=tuple(center_vars),
        gap=tuple(gaps), penalty=tuple(penalties), pred_cost=tuple(pred_costs),
        cut_y=tuple(cut_y), cut_u=tuple(cut_u), width_grids=tuple(grids),
        frozen_tau=frozen,
    )

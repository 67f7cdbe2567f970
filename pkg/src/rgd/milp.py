"""Minimal in-memory LP/MIP representation with a HiGHS backend.

The model holds variables with bounds, sparse constraint rows, a linear
objective, and named variable groups for result extraction. Solving
delegates to scipy's HiGHS interface (LP and branch-and-bound MIP).
Also provides the two linearization utilities used by the master
problem: big-M complementarity and convex-combination piecewise terms.
"""
from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

LE = "<="
GE = ">="
EQ = "="

_STATUS_MAP = {
    0: "Optimal",
    1: "IterLimit",
    2: "Infeasible",
    3: "Unbounded",
    4: "Error",
}

BIG_M_FLOOR = 1e3
BIG_M_CEIL = 1e7


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float
    ub: float
    binary: bool = False


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: tuple[tuple[int, float], ...]   # (column, coefficient), sorted by column
    sense: str
    rhs: float


@dataclass(frozen=True)
class SolverParams:
    time_limit: Optional[float] = None      # seconds
    mip_gap: Optional[float] = 1e-6         # relative; backend default is too loose
    node_limit: Optional[int] = None
    verbose: bool = False


@dataclass
class SolveOutcome:
    status: str                             # Optimal/Infeasible/Unbounded/IterLimit/Error
    objective: Optional[float]
    values: Optional[np.ndarray]
    wall_time: float
    message: str = ""
    _groups: dict[str, tuple[int, ...]] = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "Optimal"

    def group(self, name: str) -> np.ndarray:
        if self.values is None:
            raise RuntimeError(f"no primal values available (status {self.status})")
        return self.values[list(self._groups[name])]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.group(name)


_NAME_RE = re.compile(r"^[A-Za-z0-9_.\[\],+-]+$")


class LinearModel:
    def __init__(self, name: str = "model", sense: str = "min"):
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        self.name = name
        self.sense = sense
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.groups: dict[str, tuple[int, ...]] = {}

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def n_binaries(self) -> int:
        return sum(v.binary for v in self.variables)

    def add_var(
        self,
        name: str,
        lb: float = 0.0,
        ub: float = math.inf,
        binary: bool = False,
    ) -> int:
        if not _NAME_RE.match(name):
            raise ValueError(f"invalid variable name {name!r}")
        if binary:
            lb, ub = 0.0, 1.0
        if lb > ub:
            raise ValueError(f"variable {name}: lb {lb} > ub {ub}")
        self.variables.append(Variable(name, float(lb), float(ub), binary))
        return len(self.variables) - 1

    def add_vars(self, base: str, count: int, lb: float = 0.0, ub: float = math.inf) -> list[int]:
        return [self.add_var(f"{base}[{k}]", lb, ub) for k in range(count)]

    def _clean_coeffs(self, coeffs) -> tuple[tuple[int, float], ...]:
        if isinstance(coeffs, dict):
            items = coeffs.items()
        else:
            items = coeffs
        merged: dict[int, float] = {}
        for col, coef in items:
            if not 0 <= col < self.n_vars:
                raise ValueError(f"constraint references undeclared variable column {col}")
            merged[col] = merged.get(col, 0.0) + float(coef)
        return tuple(sorted((c, v) for c, v in merged.items() if v != 0.0))

    def add_constr(self, coeffs, sense: str, rhs: float, name: Optional[str] = None) -> int:
        if sense not in (LE, GE, EQ):
            raise ValueError(f"unknown sense {sense!r}")
        row = Constraint(
            name or f"c{len(self.constraints)}",
            self._clean_coeffs(coeffs),
            sense,
            float(rhs),
        )
        self.constraints.append(row)
        return len(self.constraints) - 1

    def set_objective(self, coeffs, sense: Optional[str] = None) -> None:
        if sense is not None:
            if sense not in ("min", "max"):
                raise ValueError("sense must be 'min' or 'max'")
            self.sense = sense
        self.objective = dict(self._clean_coeffs(coeffs))

    def add_objective_term(self, col: int, coef: float) -> None:
        if not 0 <= col < self.n_vars:
            raise ValueError(f"objective references undeclared variable column {col}")
        self.objective[col] = self.objective.get(col, 0.0) + float(coef)

    def add_group(self, name: str, indices: Sequence[int]) -> None:
        self.groups[name] = tuple(int(i) for i in indices)

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for col, coef in self.objective.items():
            c[col] = coef
        return c

    # -- solving -------------------------------------------------------------

    def solve(self, params: Optional[SolverParams] = None) -> SolveOutcome:
        params = params or SolverParams()
        start = time.perf_counter()
        n = self.n_vars
        c = self.objective_vector()
        if self.sense == "max":
            c = -c
        integrality = np.array([1 if v.binary else 0 for v in self.variables])
        lbs = np.array([v.lb for v in self.variables])
        ubs = np.array([v.ub for v in self.variables])
        constraints = None
        if self.constraints:
            rows, cols, vals = [], [], []
            lo = np.empty(len(self.constraints))
            hi = np.empty(len(self.constraints))
            for r, con in enumerate(self.constraints):
                for col, coef in con.coeffs:
                    rows.append(r)
                    cols.append(col)
                    vals.append(coef)
                if con.sense == LE:
                    lo[r], hi[r] = -np.inf, con.rhs
                elif con.sense == GE:
                    lo[r], hi[r] = con.rhs, np.inf
                else:
                    lo[r], hi[r] = con.rhs, con.rhs
            mat = sparse.csr_matrix(
                (vals, (rows, cols)), shape=(len(self.constraints), n)
            )
            constraints = LinearConstraint(mat, lo, hi)
        options: dict = {"disp": params.verbose}
        if params.time_limit is not None:
            options["time_limit"] = params.time_limit
        if params.mip_gap is not None:
            options["mip_rel_gap"] = params.mip_gap
        if params.node_limit is not None:
            options["node_limit"] = params.node_limit
        try:
            res = milp(
                c=c,
                constraints=constraints,
                integrality=integrality,
                bounds=Bounds(lbs, ubs),
                options=options,
            )
        except Exception as exc:  # numerical failure inside the backend
            return SolveOutcome(
                status="Error",
                objective=None,
                values=None,
                wall_time=time.perf_counter() - start,
                message=str(exc),
                _groups=dict(self.groups),
            )
        wall = time.perf_counter() - start
        status = _STATUS_MAP.get(res.status, "Error")
        values = None
        objective = None
        if status == "Optimal" and res.x is not None:
            values = np.asarray(res.x, dtype=float)
            raw = float(self.objective_vector() @ values)
            objective = raw
        return SolveOutcome(
            status=status,
            objective=objective,
            values=values,
            wall_time=wall,
            message=str(res.message) if hasattr(res, "message") else "",
            _groups=dict(self.groups),
        )

    # -- equality and serialization -------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, LinearModel):
            return NotImplemented
        return (
            self.name == other.name
            and self.sense == other.sense
            and self.variables == other.variables
            and self.constraints == other.constraints
            and self.objective == other.objective
            and self.groups == other.groups
        )

    def to_debug_text(self) -> str:
        """LP-style dump; round-trips through parse_debug_text."""
        out = [f"\\ model: {self.name}"]
        out.append("minimize" if self.sense == "min" else "maximize")
        terms = " + ".join(
            f"{coef!r} {self.variables[col].name}"
            for col, coef in sorted(self.objective.items())
        )
        out.append(f" obj: {terms}")
        out.append("subject to")
        for con in self.constraints:
            body = " + ".join(
                f"{coef!r} {self.variables[col].name}" for col, coef in con.coeffs
            )
            out.append(f" {con.name}: {body} {con.sense} {con.rhs!r}")
        out.append("bounds")
        for v in self.variables:
            out.append(f" {v.lb!r} <= {v.name} <= {v.ub!r}")
        out.append("binaries")
        for v in self.variables:
            if v.binary:
                out.append(f" {v.name}")
        out.append("groups")
        for name, idx in self.groups.items():
            cols = " ".join(self.variables[i].name for i in idx)
            out.append(f" {name}: {cols}")
        out.append("end")
        return "\n".join(out) + "\n"


def _parse_float(tok: str) -> float:
    if tok == "inf":
        return math.inf
    if tok == "-inf":
        return -math.inf
    return float(tok)


def _parse_terms(body: str, index: dict[str, int]) -> dict[int, float]:
    coeffs: dict[int, float] = {}
    body = body.strip()
    if not body:
        return coeffs
    for term in body.split(" + "):
        coef_tok, name = term.rsplit(" ", 1)
        coeffs[index[name]] = _parse_float(coef_tok)
    return coeffs


def parse_debug_text(text: str) -> LinearModel:
    """Inverse of LinearModel.to_debug_text."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    pos = 0
    if not lines[pos].startswith("\\ model: "):
        raise ValueError("missing model header")
    name = lines[pos][len("\\ model: "):]
    pos += 1
    sense = "min" if lines[pos] == "minimize" else "max"
    if lines[pos] not in ("minimize", "maximize"):
        raise ValueError(f"expected objective sense, got {lines[pos]!r}")
    pos += 1
    obj_line = lines[pos].strip()
    if not obj_line.startswith("obj:"):
        raise ValueError("missing objective row")
    obj_body = obj_line[len("obj:"):]
    pos += 1
    if lines[pos] != "subject to":
        raise ValueError("missing 'subject to' section")
    pos += 1
    con_lines = []
    while lines[pos] != "bounds":
        con_lines.append(lines[pos].strip())
        pos += 1
    pos += 1
    bound_lines = []
    while lines[pos] != "binaries":
        bound_lines.append(lines[pos].strip())
        pos += 1
    pos += 1
    binary_names = set()
    while lines[pos] != "groups":
        binary_names.add(lines[pos].strip())
        pos += 1
    pos += 1
    group_lines = []
    while lines[pos] != "end":
        group_lines.append(lines[pos].strip())
        pos += 1

    model = LinearModel(name, sense)
    index: dict[str, int] = {}
    for ln in bound_lines:
        lb_tok, rest = ln.split(" <= ", 1)
        var_name, ub_tok = rest.split(" <= ")
        col = model.add_var(
            var_name,
            _parse_float(lb_tok),
            _parse_float(ub_tok),
            binary=var_name in binary_names,
        )
        index[var_name] = col
    model.set_objective(_parse_terms(obj_body, index))
    for ln in con_lines:
        con_name, rest = ln.split(": ", 1)
        m = re.match(r"^(.*?) (<=|>=|=) ([^ ]+)$", rest)
        if not m:
            raise ValueError(f"cannot parse constraint {ln!r}")
        body, sense_tok, rhs_tok = m.groups()
        model.add_constr(_parse_terms(body, index), sense_tok, _parse_float(rhs_tok), con_name)
    for ln in group_lines:
        gname, cols = ln.split(": ", 1) if ": " in ln else (ln.rstrip(":"), "")
        members = [index[c] for c in cols.split()] if cols else []
        model.add_group(gname, members)
    return model


# -- big-M helpers ------------------------------------------------------------


def bigm_for_row(
    model: LinearModel,
    coeffs: dict[int, float],
    rhs: float,
    floor: float = BIG_M_FLOOR,
    ceil: float = BIG_M_CEIL,
) -> float:
    """Upper bound of rhs - sum(coeffs*x) over the variable boxes.

    Interval arithmetic over declared bounds; clamped to [floor, ceil] so a
    loose bound never poisons conditioning and a tight one never cuts.
    """
    lo_sum = 0.0
    for col, coef in coeffs.items():
        v = model.variables[col]
        contrib = coef * (v.lb if coef > 0 else v.ub)
        if not math.isfinite(contrib):
            return ceil
        lo_sum += contrib
    m = rhs - lo_sum
    if not math.isfinite(m):
        return ceil
    return min(max(m, floor), ceil)


def add_complementarity(
    model: LinearModel,
    slack_coeffs: dict[int, float],
    slack_rhs: float,
    dual_var: int,
    big_m: tuple[float, float],
    name: str = "compl",
) -> int:
    """Encode 0 <= dual  perp  (slack_rhs - sum(slack_coeffs*x)) >= 0.

    Both sides must already be constrained nonnegative in the model.
    Introduces one binary z with slack <= M1*z and dual <= M2*(1-z);
    returns the binary's column.
    """
    m1, m2 = big_m
    if m1 <= 0 or m2 <= 0:
        raise ValueError("big-M values must be positive")
    z = model.add_var(f"{name}.z", binary=True)
    row = {col: -coef for col, coef in slack_coeffs.items()}
    row[z] = -m1
    model.add_constr(row, LE, -slack_rhs, name=f"{name}.slack_le")
    model.add_constr({dual_var: 1.0, z: m2}, LE, m2, name=f"{name}.dual_le")
    return z


# -- piecewise-linear terms ----------------------------------------------------


@dataclass(frozen=True)
class InterpolationGrid:
    """Convex-combination weights over a 1-d breakpoint grid."""

    breakpoints: np.ndarray
    lam: tuple[int, ...]              # weight variable columns
    adjacency: tuple[int, ...]        # segment binaries (empty when relaxed)


@dataclass(frozen=True)
class PiecewiseResult:
    input_var: int
    output_var: int
    grid: InterpolationGrid
    max_interp_error: float


def add_interpolation_grid(
    model: LinearModel,
    lo: float,
    hi: float,
    n: int,
    adjacency: bool = True,
    name: str = "pw",
) -> InterpolationGrid:
    """Weights lam_k >= 0 with sum 1 over a uniform grid on [lo, hi].

    With adjacency=True, segment binaries restrict support to one segment
    (exact interpolant for any function). Without them the encoding only
    lower-bounds convex functions and must be used on objective-minimized
    terms.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    if n < 2:
        raise ValueError("need at least two breakpoints")
    pts = np.linspace(lo, hi, n)
    lam = [model.add_var(f"{name}.lam[{k}]", 0.0, 1.0) for k in range(n)]
    model.add_constr({v: 1.0 for v in lam}, EQ, 1.0, name=f"{name}.convex")
    seg: list[int] = []
    if adjacency:
        seg = [model.add_var(f"{name}.seg[{s}]", binary=True) for s in range(n - 1)]
        model.add_constr({z: 1.0 for z in seg}, EQ, 1.0, name=f"{name}.one_seg")
        for k in range(n):
            row = {lam[k]: 1.0}
            if k > 0:
                row[seg[k - 1]] = -1.0
            if k < n - 1:
                row[seg[k]] = -1.0
            model.add_constr(row, LE, 0.0, name=f"{name}.adj[{k}]")
    return InterpolationGrid(pts, tuple(lam), tuple(seg))


def grid_output(
    model: LinearModel,
    grid: InterpolationGrid,
    values: np.ndarray,
    name: str,
    lb: Optional[float] = None,
    ub: Optional[float] = None,
) -> int:
    """New variable equal to the interpolant with the given breakpoint values."""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.breakpoints.shape:
        raise ValueError("one value per breakpoint required")
    if not np.isfinite(values).all():
        raise ValueError("piecewise values must be finite at every breakpoint")
    out = model.add_var(
        name,
        float(values.min()) if lb is None else lb,
        float(values.max()) if ub is None else ub,
    )
    row = {v: float(values[k]) for k, v in enumerate(grid.lam)}
    row[out] = -1.0
    model.add_constr(row, EQ, 0.0, name=f"{name}.interp")
    return out


def interp_error_on_grid(f: Callable[[float], float], lo: float, hi: float, n: int) -> float:
    """Midpoint-scan estimate of the max interpolation gap on the grid."""
    pts = np.linspace(lo, hi, n)
    vals = np.array([f(v) for v in pts], dtype=float)
    mids = (pts[:-1] + pts[1:]) / 2.0
    mid_vals = np.array([f(v) for v in mids], dtype=float)
    return float(np.abs((vals[:-1] + vals[1:]) / 2.0 - mid_vals).max())


def add_piecewise(
    model: LinearModel,
    f: Callable[[float], float],
    lo: float,
    hi: float,
    n: int,
    adjacency: bool = True,
    name: str = "pw",
) -> PiecewiseResult:
    """Input and output variables tied by the piecewise interpolant of f."""
    grid = add_interpolation_grid(model, lo, hi, n, adjacency=adjacency, name=name)
    vals = np.array([f(v) for v in grid.breakpoints], dtype=float)
    if not np.isfinite(vals).all():
        raise ValueError("piecewise values must be finite at every breakpoint")
    x = grid_output(model, grid, grid.breakpoints, f"{name}.in")
    y = grid_output(model, grid, vals, f"{name}.out")
    return PiecewiseResult(
        input_var=x,
        output_var=y,
        grid=grid,
        max_interp_error=interp_error_on_grid(f, lo, hi, n),
    )

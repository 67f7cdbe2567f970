"""Domain model for robust generation dispatch instances.

All types are immutable after construction and safe to share across
threads. Periods are uniform 1-hour intervals, so $/MWh coefficients
multiply MW quantities directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

RES = "res"
LOAD = "load"


@dataclass(frozen=True)
class Generator:
    id: str
    on_status: tuple[int, ...]        # 1 = committed in period t (given parameter)
    output_cost: float                # $/MWh
    reserve_up_cost: float            # $/MWh
    reserve_down_cost: float          # $/MWh
    adjust_up_cost: float             # $/MWh
    adjust_down_cost: float           # $/MWh
    p_min: float                      # MW
    p_max: float                      # MW
    reserve_up_cap: float             # MW
    reserve_down_cap: float           # MW
    ramp_up: float                    # MW/period
    ramp_down: float                  # MW/period
    ptdf: tuple[float, ...]           # one entry per line


@dataclass(frozen=True)
class Agent:
    """An uncertain resource: RES maximum output or load demand."""

    id: str
    kind: str                         # "res" or "load"
    prior_mean: tuple[float, ...]     # operator forecast, MW per period
    prior_variance: float             # operator estimation variance, MW^2
    prediction: tuple[float, ...]     # agent-reported series, MW per period
    ptdf: tuple[float, ...]
    truth: Optional[tuple[float, ...]] = None  # hindsight realization, MW


@dataclass(frozen=True)
class Line:
    id: str
    capacity: float                   # MW


@dataclass(frozen=True)
class CaseOptions:
    """Solver-facing knobs carried with the case."""

    mp_breakpoints: int = 101         # grid size per piecewise-linearized term
    eps: Optional[float] = None       # absolute gap; None = max(1, 1e-4*|UB|)
    rel_gap: Optional[float] = None   # relative gap; overrides eps when set
    iter_cap: int = 200
    feas_tol: float = 1e-4            # MW slack below which FC counts as zero
    tau_max: float = 0.999            # accuracy cap in optimization contexts
    big_m_override: Optional[float] = None


@dataclass(frozen=True)
class DispatchCase:
    name: str
    generators: tuple[Generator, ...]
    agents: tuple[Agent, ...]
    lines: tuple[Line, ...]
    horizon: int                      # number of periods T
    delta: float                      # per-component confidence parameter
    xi: float                         # budget confidence parameter
    prediction_cost_m: float          # $ * MW^2, per period
    curtailment_penalty: float        # $/MWh
    mapping_penalty: float = 1e4      # weight on the center-consistency penalty
    options: CaseOptions = field(default_factory=CaseOptions)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def res_indices(self) -> tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.agents) if a.kind == RES)

    @property
    def load_indices(self) -> tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.agents) if a.kind == LOAD)

    @property
    def m_hat(self) -> float:
        """Prediction cost coefficient aggregated over the horizon."""
        return self.horizon * self.prediction_cost_m

    def prior_mean_matrix(self) -> np.ndarray:
        return np.array([a.prior_mean for a in self.agents], dtype=float)

    def prediction_matrix(self) -> np.ndarray:
        return np.array([a.prediction for a in self.agents], dtype=float)

    def truth_matrix(self) -> Optional[np.ndarray]:
        if any(a.truth is None for a in self.agents):
            return None
        return np.array([a.truth for a in self.agents], dtype=float)

    def prior_variances(self) -> np.ndarray:
        return np.array([a.prior_variance for a in self.agents], dtype=float)

    def with_scaled_variance(self, multiplier: float) -> "DispatchCase":
        agents = tuple(
            replace(a, prior_variance=a.prior_variance * multiplier)
            for a in self.agents
        )
        return replace(self, agents=agents)

    def with_prediction_cost(self, m: float) -> "DispatchCase":
        return replace(self, prediction_cost_m=m)

    def with_confidence(self, delta: float, xi: float) -> "DispatchCase":
        return replace(self, delta=delta, xi=xi)


@dataclass(frozen=True)
class FirstStageDecision:
    p: np.ndarray                     # (J, T) reference output, MW
    r_up: np.ndarray                  # (J, T) upward reserve, MW
    r_dn: np.ndarray                  # (J, T) downward reserve, MW
    payments: np.ndarray              # (I,) $
    accuracies: np.ndarray            # (I,) in [0, 1]


@dataclass(frozen=True)
class SecondStageDecision:
    p_up: np.ndarray                  # (J, T) upward adjustment, MW
    p_dn: np.ndarray                  # (J, T) downward adjustment, MW
    curtail: np.ndarray               # (n_res, T) RES curtailment, MW


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_case(case: DispatchCase) -> ValidationReport:
    """Check structural invariants; returns all findings, empty = valid."""
    bad: list[str] = []
    T = case.horizon
    L = case.n_lines
    if T < 1:
        bad.append("horizon must be at least 1 period")
    if not 0.0 < case.delta < 1.0:
        bad.append("delta must lie in (0,1)")
    if not 0.0 < case.xi < 1.0:
        bad.append("xi must lie in (0,1)")
    if case.prediction_cost_m < 0:
        bad.append("prediction cost coefficient m must be nonnegative")
    if case.curtailment_penalty < 0:
        bad.append("curtailment penalty must be nonnegative")
    if not case.generators:
        bad.append("case needs at least one generator")
    for g in case.generators:
        tag = f"generator {g.id}"
        if len(g.on_status) != T:
            bad.append(f"{tag}: on_status length != horizon")
        if any(s not in (0, 1) for s in g.on_status):
            bad.append(f"{tag}: on_status entries must be 0 or 1")
        if not 0.0 <= g.p_min <= g.p_max:
            bad.append(f"{tag}: requires 0 <= p_min <= p_max")
        for label, v in (
            ("output_cost", g.output_cost),
            ("reserve_up_cost", g.reserve_up_cost),
            ("reserve_down_cost", g.reserve_down_cost),
            ("adjust_up_cost", g.adjust_up_cost),
            ("adjust_down_cost", g.adjust_down_cost),
        ):
            if v < 0:
                bad.append(f"{tag}: {label} must be nonnegative")
        for label, v in (
            ("reserve_up_cap", g.reserve_up_cap),
            ("reserve_down_cap", g.reserve_down_cap),
            ("ramp_up", g.ramp_up),
            ("ramp_down", g.ramp_down),
        ):
            if v < 0:
                bad.append(f"{tag}: {label} must be nonnegative")
        if len(g.ptdf) != L:
            bad.append(f"{tag}: PTDF row needs one entry per line")
    for a in case.agents:
        tag = f"agent {a.id}"
        if a.kind not in (RES, LOAD):
            bad.append(f"{tag}: kind must be 'res' or 'load'")
        if a.prior_variance <= 0:
            bad.append(f"{tag}: prior variance must be positive")
        if len(a.prior_mean) != T:
            bad.append(f"{tag}: prior_mean length != horizon")
        if len(a.prediction) != T:
            bad.append(f"{tag}: prediction length != horizon")
        if a.truth is not None and len(a.truth) != T:
            bad.append(f"{tag}: truth length != horizon")
        if len(a.ptdf) != L:
            bad.append(f"{tag}: PTDF row needs one entry per line")
    for ln in case.lines:
        if ln.capacity <= 0:
            bad.append(f"line {ln.id}: line capacity must be positive")
    opts = case.options
    if opts.mp_breakpoints < 2:
        bad.append("mp_breakpoints must be at least 2")
    if not 0.0 < opts.tau_max < 1.0:
        bad.append("tau_max must lie in (0,1)")
    return ValidationReport(tuple(bad))


def _check_shape(arr: np.ndarray, shape: tuple[int, ...], what: str) -> None:
    if tuple(np.shape(arr)) != shape:
        raise ValueError(f"{what}: expected shape {shape}, got {np.shape(arr)}")


def first_stage_cost(case: DispatchCase, x: FirstStageDecision) -> float:
    """Day-ahead cost: generation, reserves, and prediction payments."""
    J, T = case.n_gen, case.horizon
    _check_shape(x.p, (J, T), "p")
    _check_shape(x.r_up, (J, T), "r_up")
    _check_shape(x.r_dn, (J, T), "r_dn")
    _check_shape(x.payments, (case.n_agents,), "payments")
    out_c = np.array([g.output_cost for g in case.generators])
    ru_c = np.array([g.reserve_up_cost for g in case.generators])
    rd_c = np.array([g.reserve_down_cost for g in case.generators])
    total = (
        out_c @ x.p.sum(axis=1)
        + ru_c @ x.r_up.sum(axis=1)
        + rd_c @ x.r_dn.sum(axis=1)
    )
    return float(total + x.payments.sum())


def second_stage_cost(case: DispatchCase, y: SecondStageDecision) -> float:
    """Re-dispatch cost: adjustments plus curtailment penalty."""
    J, T = case.n_gen, case.horizon
    _check_shape(y.p_up, (J, T), "p_up")
    _check_shape(y.p_dn, (J, T), "p_dn")
    _check_shape(y.curtail, (len(case.res_indices), T), "curtail")
    up_c = np.array([g.adjust_up_cost for g in case.generators])
    dn_c = np.array([g.adjust_down_cost for g in case.generators])
    total = up_c @ y.p_up.sum(axis=1) + dn_c @ y.p_dn.sum(axis=1)
    return float(total + case.curtailment_penalty * y.curtail.sum())

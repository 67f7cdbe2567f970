"""Forecast fusion and the decision-dependent uncertainty set.

The operator combines its prior (mean, variance) with a purchased agent
prediction through the best linear predictor. The resulting conditional
variance shrinks with the purchased accuracy and drives the half-widths
of a budgeted polyhedral uncertainty set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .model import DispatchCase

INF_NOISE = math.inf

ArrayLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class FusionResult:
    alpha: np.ndarray                 # intercept of the linear predictor, per period
    accuracy: float                   # weight on the agent prediction, in [0,1]
    fused_center: np.ndarray          # MW per period
    residual_variance: float          # MW^2, conditional on the prediction
    noise_variance: float             # MW^2; math.inf = useless prediction


def fuse(
    prior_mean: ArrayLike,
    prior_var: float,
    noise_var: float,
    prediction: ArrayLike,
) -> FusionResult:
    """Best linear predictor of the uncertain quantity given a prediction.

    The infinite-noise case is handled as its limit (accuracy 0) rather
    than by arithmetic on infinity.
    """
    if prior_var <= 0:
        raise ValueError("prior variance must be positive")
    if noise_var < 0:
        raise ValueError("noise variance must be nonnegative")
    try:
        mean, pred = np.broadcast_arrays(
            np.atleast_1d(np.asarray(prior_mean, dtype=float)),
            np.atleast_1d(np.asarray(prediction, dtype=float)),
        )
    except ValueError:
        raise ValueError("prior mean and prediction must share a shape")
    if math.isinf(noise_var):
        tau = 0.0
    else:
        tau = prior_var / (prior_var + noise_var)
    alpha = (1.0 - tau) * mean
    return FusionResult(
        alpha=alpha,
        accuracy=tau,
        fused_center=alpha + tau * pred,
        residual_variance=prior_var * (1.0 - tau),
        noise_variance=noise_var,
    )


def accuracy_to_noise(tau: float, prior_var: float) -> float:
    """Invert the accuracy definition; tau = 0 maps to the +inf sentinel."""
    if prior_var <= 0:
        raise ValueError("prior variance must be positive")
    if not 0.0 <= tau < 1.0:
        raise ValueError("accuracy must lie in [0, 1); zero noise is the caller's special case")
    if tau == 0.0:
        return INF_NOISE
    return prior_var * (1.0 - tau) / tau


def prediction_cost(tau: float, prior_var: float, m_hat: float) -> float:
    """Cost an agent incurs to deliver accuracy tau; grows as 1/(1 - tau)."""
    if prior_var <= 0:
        raise ValueError("prior variance must be positive")
    if not 0.0 <= tau < 1.0:
        raise ValueError("accuracy must lie in [0, 1); cost diverges at 1")
    return (m_hat / prior_var) * tau / (1.0 - tau)


def budgets_raw(I: int, T: int, delta: float, xi: float) -> tuple[float, float]:
    """Closed-form spatial/temporal budgets before the trivial-cap clamp."""
    if I < 1 or T < 1:
        raise ValueError("need at least one agent and one period")
    if not (0.0 < delta < 1.0 and 0.0 < xi < 1.0):
        raise ValueError("delta and xi must lie in (0,1)")
    gs = math.sqrt(I * (1.0 - delta) * (1.0 + I - I * xi) / (1.0 - xi))
    gt = math.sqrt(T * (1.0 - delta) * (1.0 + T - T * xi) / (1.0 - xi))
    return gs, gt


def budgets(I: int, T: int, delta: float, xi: float) -> tuple[float, float]:
    """Budgets clamped to the trivially valid caps I and T.

    The per-component bounds already cap the sums, so clamping never
    changes the set and removes redundant slack.
    """
    gs, gt = budgets_raw(I, T, delta, xi)
    return min(gs, float(I)), min(gt, float(T))


@dataclass(frozen=True)
class NormalizedPolytope:
    """Unit-deviation polytope; independent of the purchased accuracies."""

    n_agents: int
    n_periods: int
    budget_spatial: float
    budget_temporal: float

    def contains(self, phi: np.ndarray, tol: float = 1e-9) -> bool:
        phi = np.asarray(phi, dtype=float).reshape(self.n_agents, self.n_periods)
        a = np.abs(phi)
        if (a > 1.0 + tol).any():
            return False
        if (a.sum(axis=0) > self.budget_spatial + tol).any():
            return False
        if (a.sum(axis=1) > self.budget_temporal + tol).any():
            return False
        return True


@dataclass(frozen=True)
class DduUncertaintySet:
    centers: np.ndarray               # (I, T) MW
    half_widths: np.ndarray           # (I,) MW, constant over periods
    budget_spatial: float
    budget_temporal: float
    delta: float
    xi: float

    @property
    def n_agents(self) -> int:
        return self.centers.shape[0]

    @property
    def n_periods(self) -> int:
        return self.centers.shape[1]

    def polytope(self) -> NormalizedPolytope:
        return NormalizedPolytope(
            self.n_agents, self.n_periods, self.budget_spatial, self.budget_temporal
        )

    def corner(self, phi: np.ndarray) -> np.ndarray:
        """Map a normalized deviation to an uncertainty realization."""
        phi = np.asarray(phi, dtype=float).reshape(self.centers.shape)
        return self.centers + self.half_widths[:, None] * phi


def build_set(
    case: DispatchCase,
    accuracies: Sequence[float],
    predictions: Optional[np.ndarray] = None,
) -> DduUncertaintySet:
    """Uncertainty set implied by the purchased accuracies."""
    taus = np.asarray(accuracies, dtype=float)
    if taus.shape != (case.n_agents,):
        raise ValueError("one accuracy per agent required")
    if ((taus < 0) | (taus > 1)).any():
        raise ValueError("accuracies must lie in [0, 1]")
    if predictions is None:
        predictions = case.prediction_matrix()
    priors = case.prior_mean_matrix()
    variances = case.prior_variances()
    centers = (1.0 - taus)[:, None] * priors + taus[:, None] * predictions
    half_widths = np.sqrt(variances * (1.0 - taus) / (1.0 - case.delta))
    gs, gt = budgets(case.n_agents, case.horizon, case.delta, case.xi)
    return DduUncertaintySet(
        centers=centers,
        half_widths=half_widths,
        budget_spatial=gs,
        budget_temporal=gt,
        delta=case.delta,
        xi=case.xi,
    )


def membership(uset: DduUncertaintySet, u: np.ndarray, tol: float = 1e-9) -> bool:
    """Test whether a realization lies in the set."""
    u = np.asarray(u, dtype=float).reshape(uset.centers.shape)
    dev = np.abs(u - uset.centers)
    h = uset.half_widths[:, None]
    zero = uset.half_widths < tol
    if (dev[zero, :] > tol).any():
        return False
    v = np.zeros_like(dev)
    nz = ~zero
    v[nz, :] = dev[nz, :] / h[nz, :]
    if (v > 1.0 + tol).any():
        return False
    if (v.sum(axis=0) > uset.budget_spatial + tol).any():
        return False
    if (v.sum(axis=1) > uset.budget_temporal + tol).any():
        return False
    return True


def signature(uset: DduUncertaintySet, u: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Normalized deviation of a point in the set.

    Zero-width coordinates map to 0 when the point sits on the center and
    raise otherwise.
    """
    u = np.asarray(u, dtype=float).reshape(uset.centers.shape)
    dev = u - uset.centers
    phi = np.zeros_like(dev)
    for i, h in enumerate(uset.half_widths):
        if h < tol:
            if np.abs(dev[i]).max() > tol:
                raise ValueError(
                    f"point deviates from a zero-width coordinate (agent index {i})"
                )
        else:
            phi[i] = dev[i] / h
    return phi


# -- empirical verification of the coverage bounds ---------------------------

TESTING_DISTRIBUTIONS = (
    "three_point_tight",
    "rademacher",
    "three_point_xi",
    "zero",
    "inflated",
)


@dataclass(frozen=True)
class ChebyshevCheck:
    distribution: str
    n_samples: int
    component_empirical: float        # P(v_it >= 1)
    component_bound: float            # 1 - delta
    budget_empirical: float           # P(sum_i v_it >= Gamma_S)
    budget_bound: float               # 1 - xi
    component_slack: float            # 3-sigma sampling allowance
    budget_slack: float

    @property
    def ok(self) -> bool:
        return (
            self.component_empirical <= self.component_bound + self.component_slack
            and self.budget_empirical <= self.budget_bound + self.budget_slack
        )


def _sample_normalized_residuals(
    distribution: str, I: int, delta: float, xi: float, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw i.i.d. unit-variance zero-mean residuals, shape (n, I)."""
    if distribution == "three_point_tight":
        spike = 1.0 / math.sqrt(1.0 - delta)
        p = (1.0 - delta) / 2.0
        return rng.choice([-spike, 0.0, spike], size=(n, I), p=[p, delta, p])
    if distribution == "rademacher":
        return rng.choice([-1.0, 1.0], size=(n, I))
    if distribution == "three_point_xi":
        a = math.sqrt((1.0 + I - I * xi) / (I * (1.0 - xi)))
        p = I * (1.0 - xi) / (2.0 * (1.0 + I - I * xi))
        return rng.choice([-a, 0.0, a], size=(n, I), p=[p, 1.0 - 2.0 * p, p])
    if distribution == "zero":
        return np.zeros((n, I))
    if distribution == "inflated":
        # deliberately violates the unit-variance assumption
        return 2.0 * rng.choice([-1.0, 1.0], size=(n, I)) / math.sqrt(1.0 - delta)
    raise ValueError(f"unknown testing distribution {distribution!r}")


def chebyshev_bound_check(
    distribution: str,
    I: int,
    delta: float,
    xi: float,
    n_samples: int,
    seed: int = 0,
) -> ChebyshevCheck:
    """Monte Carlo check of the coverage bounds on a testing distribution.

    Samples normalized residuals, converts them to set deviations
    v = |residual| * sqrt(1-delta), and compares the empirical exceedance
    frequencies against the target bounds (Lemma-level, unclamped budget).
    """
    rng = np.random.default_rng(seed)
    r = _sample_normalized_residuals(distribution, I, delta, xi, n_samples, rng)
    v = np.abs(r) * math.sqrt(1.0 - delta)
    gs, _ = budgets_raw(I, 1, delta, xi)
    comp_emp = float((v >= 1.0 - 1e-12).mean())
    budget_emp = float((v.sum(axis=1) >= gs - 1e-12).mean())
    comp_bound = 1.0 - delta
    budget_bound = 1.0 - xi
    n_comp = v.size
    comp_slack = 3.0 * math.sqrt(comp_bound * (1.0 - comp_bound) / n_comp)
    budget_slack = 3.0 * math.sqrt(budget_bound * (1.0 - budget_bound) / n_samples)
    return ChebyshevCheck(
        distribution=distribution,
        n_samples=n_samples,
        component_empirical=comp_emp,
        component_bound=comp_bound,
        budget_empirical=budget_emp,
        budget_bound=budget_bound,
        component_slack=comp_slack,
        budget_slack=budget_slack,
    )

"""Shared test utilities: seeded random desk-scale instances."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from rgd.formulations import CanonicalTwoStage
from rgd.model import Agent, CaseOptions, DispatchCase, Generator, Line


def make_random_case(
    seed: int,
    max_agents: int = 3,
    max_periods: int = 2,
    max_gens: int = 3,
    breakpoints: int = 101,
) -> DispatchCase:
    """Small random instance with a feasible nominal balance.

    Mixes RES and load agents, occasionally switches a generator off or
    tightens a line, and keeps the net load inside the committed units'
    output range so the first stage is never trivially empty.
    """
    rng = np.random.default_rng(seed)
    J = int(rng.integers(1, max_gens + 1))
    T = int(rng.integers(1, max_periods + 1))
    max_i = max(1, min(max_agents, 6 // T))
    I = int(rng.integers(1, max_i + 1))

    agents = []
    for i in range(I):
        kind = "res" if rng.random() < 0.4 and I > 1 else "load"
        base = rng.uniform(30.0, 80.0) if kind == "res" else rng.uniform(60.0, 160.0)
        mean = base + rng.uniform(-10.0, 10.0, size=T)
        var = float(rng.uniform(16.0, 300.0))
        pred = mean + rng.normal(0.0, 0.3 * np.sqrt(var), size=T)
        truth = mean + rng.normal(0.0, 0.5 * np.sqrt(var), size=T)
        agents.append(Agent(
            id=f"a{i}", kind=kind,
            prior_mean=tuple(np.round(mean, 3)),
            prior_variance=round(var, 3),
            prediction=tuple(np.round(pred, 3)),
            truth=tuple(np.round(truth, 3)),
            ptdf=(),
        ))

    net = np.zeros(T)
    for a in agents:
        sign = -1.0 if a.kind == "res" else 1.0
        net += sign * np.array(a.prior_mean)
    width_sum = sum(
        np.sqrt(a.prior_variance / 0.05) for a in agents
    )

    on = np.ones((J, T), dtype=int)
    if J > 1 and rng.random() < 0.25:
        on[int(rng.integers(0, J)), :] = 0
    n_on = np.maximum(on.sum(axis=0), 1)
    # committed capacity brackets worst-case net load with slack
    need_hi = max(float(net.max() + width_sum + 20.0), 50.0)
    p_max = need_hi / n_on.min() * rng.uniform(1.1, 1.6)
    p_min = 0.0 if rng.random() < 0.7 else rng.uniform(1.0, 5.0)

    gens = []
    for j in range(J):
        gens.append(Generator(
            id=f"g{j}", on_status=tuple(int(v) for v in on[j]),
            output_cost=round(float(rng.uniform(5.0, 50.0)), 2),
            reserve_up_cost=round(float(rng.uniform(0.5, 8.0)), 2),
            reserve_down_cost=round(float(rng.uniform(0.5, 8.0)), 2),
            adjust_up_cost=round(float(rng.uniform(1.0, 60.0)), 2),
            adjust_down_cost=round(float(rng.uniform(1.0, 60.0)), 2),
            p_min=p_min, p_max=round(p_max, 2),
            reserve_up_cap=round(float(rng.uniform(0.4, 1.2) * width_sum + 10.0), 2),
            reserve_down_cap=round(float(rng.uniform(0.4, 1.2) * width_sum + 10.0), 2),
            ramp_up=round(p_max * float(rng.uniform(0.5, 1.0)), 2),
            ramp_down=round(p_max * float(rng.uniform(0.5, 1.0)), 2),
            ptdf=(),
        ))

    n_lines = int(rng.integers(1, 3))
    lines = []
    gen_ptdf = np.round(rng.uniform(-0.8, 0.8, size=(J, n_lines)), 2)
    ag_ptdf = np.round(rng.uniform(-0.8, 0.8, size=(I, n_lines)), 2)
    for l in range(n_lines):
        tight = rng.random() < 0.3
        cap = float(rng.uniform(0.6, 1.0) * need_hi) if tight else 1e5
        lines.append(Line(f"l{l}", round(max(cap, 30.0), 2)))
    gens = [replace(g, ptdf=tuple(gen_ptdf[j])) for j, g in enumerate(gens)]
    agents = [replace(a, ptdf=tuple(ag_ptdf[i])) for i, a in enumerate(agents)]

    return DispatchCase(
        name=f"rand{seed}",
        generators=tuple(gens),
        agents=tuple(agents),
        lines=tuple(lines),
        horizon=T,
        delta=float(rng.choice([0.9, 0.95])),
        xi=0.95,
        prediction_cost_m=round(float(rng.uniform(0.0, 50.0) * 10.0), 2),
        curtailment_penalty=100.0,
        options=CaseOptions(mp_breakpoints=breakpoints),
    )


def make_random_x(
    case: DispatchCase, canon: CanonicalTwoStage, seed: int, tau: np.ndarray
) -> np.ndarray:
    """A dispatch point: balanced at the fused centers, random reserves.

    Reserve levels are deliberately not sized for robustness, so the
    feasibility check exercises both outcomes.
    """
    rng = np.random.default_rng(seed)
    J, T = case.n_gen, case.horizon
    centers = ((1.0 - tau)[:, None] * case.prior_mean_matrix()
               + tau[:, None] * case.prediction_matrix())
    net = np.zeros(T)
    for i, a in enumerate(case.agents):
        net += (-1.0 if a.kind == "res" else 1.0) * centers[i]
    x = np.zeros(canon.nx)
    theta = np.array([[g.on_status[t] for t in range(T)] for g in case.generators])
    caps = np.array([g.p_max for g in case.generators])
    for t in range(T):
        weights = caps * theta[:, t]
        total = weights.sum()
        for j, g in enumerate(case.generators):
            share = net[t] * weights[j] / total if total > 0 else 0.0
            x[canon.x_p(j, t)] = max(g.p_min * theta[j, t], share)
    for j, g in enumerate(case.generators):
        for t in range(T):
            p = x[canon.x_p(j, t)]
            r_up = rng.uniform(0.0, g.reserve_up_cap) * theta[j, t]
            r_dn = rng.uniform(0.0, g.reserve_down_cap) * theta[j, t]
            x[canon.x_rup(j, t)] = min(r_up, max(0.0, g.p_max * theta[j, t] - p))
            x[canon.x_rdn(j, t)] = min(r_dn, max(0.0, p - g.p_min * theta[j, t]))
    return x


def random_tau(case: DispatchCase, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed + 991)
    return np.round(rng.uniform(0.0, case.options.tau_max, size=case.n_agents), 4)

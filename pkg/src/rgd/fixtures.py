"""Shipped example cases.

`python -m rgd.fixtures <dir>` regenerates the JSON files under cases/.
The five-agent system mirrors the scale and cost structure of a small
transmission benchmark; series are synthetic, so headline dollar figures
are illustrative rather than regression targets.
"""
from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np

from .casefile import save_case
from .model import Agent, CaseOptions, DispatchCase, Generator, Line


def toy1() -> DispatchCase:
    """Single generator vs a single uncertain load, one period."""
    return DispatchCase(
        name="toy1",
        generators=(
            Generator(
                id="g1", on_status=(1,), output_cost=10.0,
                reserve_up_cost=1.0, reserve_down_cost=1.0,
                adjust_up_cost=2.0, adjust_down_cost=2.0,
                p_min=0.0, p_max=100.0,
                reserve_up_cap=50.0, reserve_down_cap=50.0,
                ramp_up=100.0, ramp_down=100.0, ptdf=(0.3,),
            ),
        ),
        agents=(
            Agent(
                id="d1", kind="load", prior_mean=(50.0,), prior_variance=100.0,
                prediction=(50.0,), truth=(52.0,), ptdf=(0.4,),
            ),
        ),
        lines=(Line("l1", 1e6),),
        horizon=1, delta=0.95, xi=0.95,
        prediction_cost_m=100.0, curtailment_penalty=100.0,
    )


def ddu2() -> DispatchCase:
    """Two-load instance where buying accuracy is clearly worthwhile.

    The agent predictions equal the operator priors, so purchases shrink
    the set without moving its center: the traditional algorithm gains
    nothing from paying and settles at zero payments, while the mapping
    algorithm trades cheap accuracy against expensive reserves.
    """
    return DispatchCase(
        name="ddu2",
        generators=(
            Generator(
                id="g1", on_status=(1,), output_cost=10.0,
                reserve_up_cost=5.0, reserve_down_cost=5.0,
                adjust_up_cost=15.0, adjust_down_cost=15.0,
                p_min=0.0, p_max=800.0,
                reserve_up_cap=450.0, reserve_down_cap=450.0,
                ramp_up=800.0, ramp_down=800.0, ptdf=(0.2,),
            ),
        ),
        agents=(
            Agent(
                id="d1", kind="load", prior_mean=(200.0,), prior_variance=900.0,
                prediction=(200.0,), truth=(203.0,), ptdf=(0.5,),
            ),
            Agent(
                id="d2", kind="load", prior_mean=(200.0,), prior_variance=900.0,
                prediction=(200.0,), truth=(199.0,), ptdf=(0.4,),
            ),
        ),
        lines=(Line("l1", 5e3),),
        horizon=1, delta=0.95, xi=0.95,
        prediction_cost_m=2000.0, curtailment_penalty=100.0,
    )


def case5bus(horizon: int = 24, breakpoints: int = 101) -> DispatchCase:
    """Five-agent analog of a small benchmark system.

    Three generators, two wind farms and three uncertain loads; fixed
    demand is folded into the load means. Daily shapes are sinusoidal
    with agent predictions drawn close to the hindsight truth.
    """
    T = horizon
    t = np.arange(T)
    cycle = 2.0 * math.pi * t / max(T, 1)
    rng = np.random.default_rng(5)

    def series(base, amp, phase):
        return base + amp * np.sin(cycle + phase)

    gens = (
        Generator("g1", tuple([1] * T), 35.0, 6.0, 6.0, 40.0, 40.0,
                  280.0, 700.0, 350.0, 350.0, 350.0, 350.0,
                  (0.25, -0.10, 0.30, 0.05, -0.20, 0.15)),
        Generator("g2", tuple([1] * T), 30.0, 5.0, 5.0, 34.0, 34.0,
                  280.0, 700.0, 350.0, 350.0, 350.0, 350.0,
                  (-0.15, 0.20, 0.10, -0.30, 0.25, 0.05)),
        Generator("g3", tuple([1] * T), 25.0, 4.0, 4.0, 28.0, 28.0,
                  320.0, 800.0, 400.0, 400.0, 400.0, 400.0,
                  (0.05, 0.15, -0.25, 0.20, 0.10, -0.15)),
    )

    # variances sized so the no-purchase set widths stay coverable
    # (127/63/89/134/32 MW at delta=0.95)
    specs = [
        ("w1", "res", 180.0, 60.0, 1.0, 800.0, (0.30, 0.10, -0.20, 0.15, 0.05, 0.25)),
        ("w2", "res", 120.0, 40.0, 2.5, 200.0, (-0.20, 0.25, 0.15, 0.10, -0.10, 0.05)),
        ("d1", "load", 560.0, 80.0, 4.0, 400.0, (0.20, -0.15, 0.10, 0.25, 0.15, -0.05)),
        ("d2", "load", 520.0, 70.0, 4.3, 900.0, (0.10, 0.20, -0.15, 0.05, 0.30, 0.10)),
        ("d3", "load", 450.0, 50.0, 3.7, 100.0, (-0.05, 0.15, 0.20, -0.10, 0.10, 0.25)),
    ]
    agents = []
    for name, kind, base, amp, phase, var, ptdf in specs:
        mean = series(base, amp, phase)
        err = rng.normal(0.0, math.sqrt(var) * 0.25, size=T)
        truth = mean + err
        pred = truth - 0.2 * err
        agents.append(Agent(
            id=name, kind=kind,
            prior_mean=tuple(np.round(mean, 3)),
            prior_variance=var,
            prediction=tuple(np.round(pred, 3)),
            truth=tuple(np.round(truth, 3)),
            ptdf=ptdf,
        ))

    lines = tuple(
        Line(f"l{k+1}", cap)
        for k, cap in enumerate((900.0, 700.0, 800.0, 750.0, 850.0, 650.0))
    )
    return DispatchCase(
        name=f"case5bus_t{T}",
        generators=gens,
        agents=tuple(agents),
        lines=lines,
        horizon=T, delta=0.95, xi=0.95,
        prediction_cost_m=1e4, curtailment_penalty=100.0,
        mapping_penalty=1e4,
        options=CaseOptions(mp_breakpoints=breakpoints),
    )


def case5bus_desk() -> DispatchCase:
    """Desk-scale variant used by the sweep acceptance runs."""
    return case5bus(horizon=2, breakpoints=41)


ALL = {
    "toy1": toy1,
    "ddu2": ddu2,
    "case5bus": lambda: case5bus(24),
    "case5bus_desk": case5bus_desk,
}


def main(argv: list[str]) -> int:
    outdir = Path(argv[0]) if argv else Path("cases")
    outdir.mkdir(parents=True, exist_ok=True)
    for name, builder in ALL.items():
        path = outdir / f"{name}.json"
        save_case(builder(), path)
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))

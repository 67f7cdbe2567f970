import dataclasses

import numpy as np
import pytest

from rgd.fixtures import toy1
from rgd.model import (
    FirstStageDecision,
    SecondStageDecision,
    first_stage_cost,
    second_stage_cost,
    validate_case,
)


def test_wellformed_case_validates_clean():
    assert validate_case(toy1()).violations == ()


def test_delta_boundary_rejected():
    case = dataclasses.replace(toy1(), delta=1.0)
    report = validate_case(case)
    assert any("delta must lie in (0,1)" in v for v in report.violations)


def test_negative_line_capacity_rejected():
    case = toy1()
    bad_line = dataclasses.replace(case.lines[0], capacity=-5.0)
    report = validate_case(dataclasses.replace(case, lines=(bad_line,)))
    assert any("line capacity must be positive" in v for v in report.violations)


def test_validate_is_idempotent():
    case = toy1()
    assert validate_case(case) == validate_case(case)


def _x(p, r_up, r_dn, payments):
    return FirstStageDecision(
        p=np.array([[p]]), r_up=np.array([[r_up]]), r_dn=np.array([[r_dn]]),
        payments=np.array([payments]), accuracies=np.array([0.0]),
    )


def test_first_stage_cost_single_term():
    assert first_stage_cost(toy1(), _x(50.0, 0.0, 0.0, 0.0)) == pytest.approx(500.0)


def test_first_stage_cost_zero_decision():
    assert first_stage_cost(toy1(), _x(0.0, 0.0, 0.0, 0.0)) == 0.0


def test_first_stage_cost_toy1_hand_value():
    # p=50 @ 10 $/MWh plus symmetric 44.72 MW reserves @ 1 $/MWh
    assert first_stage_cost(toy1(), _x(50.0, 44.72, 44.72, 0.0)) == pytest.approx(589.44)


def test_first_stage_cost_dimension_mismatch():
    x = FirstStageDecision(
        p=np.zeros((2, 1)), r_up=np.zeros((1, 1)), r_dn=np.zeros((1, 1)),
        payments=np.zeros(1), accuracies=np.zeros(1),
    )
    with pytest.raises(ValueError):
        first_stage_cost(toy1(), x)


def _y(p_up, p_dn):
    return SecondStageDecision(
        p_up=np.array([[p_up]]), p_dn=np.array([[p_dn]]), curtail=np.zeros((0, 1))
    )


def test_second_stage_cost_zero():
    assert second_stage_cost(toy1(), _y(0.0, 0.0)) == 0.0


def test_second_stage_cost_adjustment():
    assert second_stage_cost(toy1(), _y(44.72, 0.0)) == pytest.approx(89.44)


def test_second_stage_cost_curtailment_contribution():
    case = dataclasses.replace(
        toy1(),
        agents=(dataclasses.replace(toy1().agents[0], kind="res"),),
    )
    y = SecondStageDecision(
        p_up=np.zeros((1, 1)), p_dn=np.zeros((1, 1)), curtail=np.array([[10.0]])
    )
    assert second_stage_cost(case, y) == pytest.approx(1000.0)


@pytest.mark.parametrize("seed", range(5))
def test_cost_operations_are_linear_in_the_decision(seed):
    rng = np.random.default_rng(seed)
    case = toy1()
    scale = rng.uniform(0.1, 3.0)
    p, ru, rd = rng.uniform(0.0, 50.0, size=3)
    base = first_stage_cost(case, _x(p, ru, rd, 0.0))
    scaled = first_stage_cost(case, _x(scale * p, scale * ru, scale * rd, 0.0))
    assert scaled == pytest.approx(scale * base)
    up, dn = rng.uniform(0.0, 40.0, size=2)
    assert second_stage_cost(case, _y(scale * up, scale * dn)) == pytest.approx(
        scale * second_stage_cost(case, _y(up, dn))
    )


def test_case_is_immutable():
    case = toy1()
    with pytest.raises(dataclasses.FrozenInstanceError):
        case.horizon = 2

import dataclasses

import numpy as np
import pytest

from helpers import make_random_case, make_random_x, random_tau
from rgd.ccg import solve_mapping_ccg, solve_traditional_ccg
from rgd.fixtures import ddu2, toy1
from rgd.formulations import canonicalize
from rgd.fusion import NormalizedPolytope, build_set
from rgd.oracles import (
    enumerate_vertices,
    exact_bilevel,
    exact_full,
    oos_evaluate,
    width_tau_grid,
)


class TestVertexEnumeration:
    def test_segment(self):
        v = enumerate_vertices(1, 1, 1.0, 1.0)
        assert v.count == 2
        assert sorted(v.points.ravel()) == [-1.0, 1.0]

    def test_square_when_budgets_slack(self):
        v = enumerate_vertices(2, 1, 2.0, 1.0)
        assert v.count == 4
        assert {tuple(p.ravel()) for p in v.points} == {
            (-1, -1), (-1, 1), (1, -1), (1, 1)
        }

    def test_octagon_under_spatial_budget(self):
        v = enumerate_vertices(2, 1, 1.5, 1.0)
        assert v.count == 8
        for p in v.points:
            assert sorted(np.abs(p.ravel())) == pytest.approx([0.5, 1.0])

    @pytest.mark.parametrize("I,T", [(1, 1), (2, 1), (1, 3), (2, 2), (3, 2)])
    def test_box_count_when_budgets_slack(self, I, T):
        v = enumerate_vertices(I, T, float(I), float(T))
        assert v.count == 2 ** (I * T)

    def test_all_points_inside_and_unique(self):
        v = enumerate_vertices(2, 2, 1.5, 1.5)
        poly = NormalizedPolytope(2, 2, 1.5, 1.5)
        seen = set()
        for p in v.points:
            assert poly.contains(p)
            key = tuple(np.round(p.ravel(), 9))
            assert key not in seen
            seen.add(key)

    def test_dimension_guard(self):
        with pytest.raises(ValueError):
            enumerate_vertices(3, 3, 2.0, 2.0)


class TestExactBilevel:
    def test_zero_width_equals_recourse_at_center(self):
        case = toy1()
        canon = canonicalize(case)
        uset = build_set(case, [1.0])
        x = np.array([45.0, 20.0, 20.0])
        res = exact_bilevel(canon, x, uset)
        assert res.feasible
        assert res.value == pytest.approx(10.0, abs=1e-9)  # 5 MW short at 2 $/MWh

    def test_toy1_worst_value(self):
        case = toy1()
        canon = canonicalize(case)
        uset = build_set(case, [0.0])
        uh = uset.half_widths[0]
        res = exact_bilevel(canon, np.array([50.0, uh, uh]), uset)
        assert res.value == pytest.approx(89.4427, abs=1e-3)

    def test_missing_reserve_yields_certificate(self):
        case = toy1()
        canon = canonicalize(case)
        uset = build_set(case, [0.0])
        uh = uset.half_widths[0]
        res = exact_bilevel(canon, np.array([50.0, 0.0, uh]), uset)
        assert not res.feasible
        assert any(p.ravel()[0] == pytest.approx(1.0) for p in res.infeasible_phis)


class TestExactFull:
    def test_free_predictions_prefer_max_accuracy(self):
        case = toy1().with_prediction_cost(0.0)
        full = exact_full(case, width_tau_grid(case, 41))
        assert full.best_tau[0] == pytest.approx(case.options.tau_max, abs=1e-9)

    def test_expensive_predictions_prefer_zero(self):
        case = toy1().with_prediction_cost(1e9)
        full = exact_full(case, width_tau_grid(case, 41))
        assert full.best_tau[0] == 0.0

    def test_matches_engine_under_refinement(self):
        case = toy1()
        rep = solve_mapping_ccg(case, eps=0.01)
        coarse = exact_full(case, width_tau_grid(case, 51), refine=11)
        fine = exact_full(case, width_tau_grid(case, 201), refine=21)
        assert fine.best_value <= coarse.best_value + 1e-9
        tol = 0.01 + 2.0 * fine.argmin_neighbor_gap + 1e-6
        assert rep.objective == pytest.approx(fine.best_value, abs=tol)

    def test_agent_guard(self):
        case = make_random_case(4, max_agents=3)
        if case.n_agents < 3:
            case = dataclasses.replace(
                case, agents=case.agents * 2, horizon=case.horizon
            )
        if case.n_agents > 2:
            with pytest.raises(ValueError):
                exact_full(case, np.array([0.0]))


class TestOutOfSample:
    def test_zero_multiplier_is_deterministic_recourse(self):
        case = toy1()                    # truth 52 vs scheduled 50
        rep = solve_mapping_ccg(case, eps=0.01)
        res = oos_evaluate(case, rep.x, "gaussian", 0.0, 50, seed=1)
        assert res.infeasible_count == 0
        assert np.allclose(res.recourse_costs, res.recourse_costs[0])
        assert res.recourse_costs[0] == pytest.approx(2.0 * 2.0, abs=1e-6)

    def test_bit_exact_reproducibility(self):
        case = toy1()
        rep = solve_mapping_ccg(case, eps=0.01)
        a = oos_evaluate(case, rep.x, "uniform", 1.5, 300, seed=9)
        b = oos_evaluate(case, rep.x, "uniform", 1.5, 300, seed=9)
        assert a.average_total_cost == b.average_total_cost
        assert (a.recourse_costs[a.feasible_mask]
                == b.recourse_costs[b.feasible_mask]).all()

    def test_order_independent_streams(self):
        case = toy1()
        rep = solve_mapping_ccg(case, eps=0.01)
        big = oos_evaluate(case, rep.x, "gaussian", 1.0, 100, seed=5)
        small = oos_evaluate(case, rep.x, "gaussian", 1.0, 40, seed=5)
        assert big.recourse_costs[:40] == pytest.approx(small.recourse_costs)

    @pytest.mark.slow
    def test_uniform_and_gaussian_agree_on_an_affine_cost_region(self):
        # schedule 20 MW below the scenario mean with ample reserves: the
        # deviation never changes sign, so the recourse cost is affine in u
        # and the two distributions share its expectation
        case = toy1()
        canon = canonicalize(case)
        from rgd.model import FirstStageDecision

        x = FirstStageDecision(
            p=np.array([[32.0]]), r_up=np.array([[40.0]]), r_dn=np.array([[40.0]]),
            payments=np.zeros(1), accuracies=np.array([0.96]),
        )
        n = 100_000
        ua = oos_evaluate(case, x, "uniform", 1.0, n, seed=3, canon=canon)
        ga = oos_evaluate(case, x, "gaussian", 1.0, n, seed=4, canon=canon)
        assert ua.infeasible_count == 0 and ga.infeasible_count == 0
        se = (ua.recourse_costs.std() + ga.recourse_costs.std()) / np.sqrt(n)
        assert abs(ua.average_total_cost - ga.average_total_cost) <= 4.0 * se + 1e-6

    def test_mapping_strategy_beats_traditional_out_of_sample(self):
        case = ddu2()
        ma = solve_mapping_ccg(case)
        tr = solve_traditional_ccg(case)
        res_m = oos_evaluate(case, ma.x, "gaussian", 1.0, 800, seed=2,
                             accuracies_for_std=ma.accuracies)
        res_t = oos_evaluate(case, tr.x, "gaussian", 1.0, 800, seed=2,
                             accuracies_for_std=ma.accuracies)
        assert res_m.average_total_cost <= res_t.average_total_cost

    def test_infeasible_scenarios_counted_not_penalized(self):
        case = ddu2()
        rep = solve_mapping_ccg(case)
        res = oos_evaluate(case, rep.x, "gaussian", 6.0, 400, seed=11)
        assert res.infeasible_count > 0
        assert np.isfinite(res.average_total_cost)
        capped = oos_evaluate(case, rep.x, "gaussian", 6.0, 400, seed=11,
                              infeasible_penalty=1e6)
        assert capped.average_total_cost > res.average_total_cost

import math

import numpy as np
import pytest

from helpers import make_random_case
from rgd.ccg import bounds_trace, solve_ccg, solve_mapping_ccg, solve_traditional_ccg
from rgd.fixtures import ddu2, toy1
from rgd.formulations import build_fc, canonicalize
from rgd.fusion import build_set
from rgd.oracles import enumerate_vertices, exact_full, width_tau_grid


@pytest.fixture(scope="module")
def toy1_mapping():
    return solve_mapping_ccg(toy1(), eps=0.01)


class TestMappingLoop:
    def test_converges_to_grid_oracle(self, toy1_mapping):
        rep = toy1_mapping
        assert rep.converged
        full = exact_full(toy1(), width_tau_grid(toy1(), 201), refine=21)
        tol = 0.01 + 2.0 * full.argmin_neighbor_gap + 1e-6
        assert rep.objective == pytest.approx(full.best_value, abs=tol)

    def test_free_predictions_collapse_uncertainty(self):
        case = toy1().with_prediction_cost(0.0)
        rep = solve_mapping_ccg(case)
        assert rep.converged
        assert rep.accuracies[0] >= 0.99 * case.options.tau_max
        # deterministic dispatch at the (perfectly predicted) load
        assert rep.objective == pytest.approx(500.0, abs=rep.eps + 30.0)

    def test_lower_bound_monotone_and_gap_ordering(self, toy1_mapping):
        lbs = [r.lb for r in toy1_mapping.iterations]
        assert all(b >= a - 1e-9 for a, b in zip(lbs, lbs[1:]))
        for rec in toy1_mapping.iterations:
            assert rec.ub >= rec.lb - 1e-5 * max(1.0, abs(rec.lb))

    def test_signatures_pairwise_distinct(self, toy1_mapping):
        keys = [
            tuple(r.signature.ravel())
            for r in toy1_mapping.iterations
            if r.signature is not None
        ]
        assert len(keys) == len(set(keys))

    def test_returned_point_is_robust_feasible(self, toy1_mapping):
        case = toy1()
        canon = canonicalize(case)
        x_vec = np.concatenate([
            toy1_mapping.x.p.ravel(),
            toy1_mapping.x.r_up.ravel(),
            toy1_mapping.x.r_dn.ravel(),
        ])
        uset = build_set(case, toy1_mapping.accuracies)
        fc, _ = build_fc(canon, case, x_vec, uset)
        assert fc.solve().objective <= case.options.feas_tol + 1e-6

    def test_iteration_cap_reported(self):
        rep = solve_mapping_ccg(toy1(), eps=1e-9, iter_cap=1)
        assert rep.termination == "iter_cap"
        assert rep.n_iterations == 1


class TestFrozenAccuracies:
    def test_modes_coincide_on_static_sets(self):
        case = toy1()
        frozen = [0.3]
        a = solve_ccg(case, mode="mapping", frozen_tau=frozen, eps=0.01)
        b = solve_ccg(case, mode="traditional", frozen_tau=frozen, eps=0.01)
        assert a.converged and b.converged
        assert a.objective == pytest.approx(b.objective, abs=0.02 + 1e-9)

    def test_static_set_matches_full_width_costing(self):
        case = toy1()
        rep = solve_ccg(case, mode="mapping", frozen_tau=[0.0], eps=0.01)
        uh = build_set(case, [0.0]).half_widths[0]
        # both reserve directions at full width plus the worst-side adjustment
        assert rep.objective == pytest.approx(500.0 + 2 * uh + 2 * uh, abs=0.1)


class TestTraditionalComparison:
    def test_static_uncertainty_gives_identical_objectives(self):
        case = toy1().with_prediction_cost(1e9)   # purchase priced out
        a = solve_mapping_ccg(case, eps=0.01)
        b = solve_traditional_ccg(case, eps=0.01)
        assert a.converged and b.converged
        assert a.objective == pytest.approx(b.objective, abs=0.05)

    def test_ddu_instance_orders_strictly_with_zero_payments(self):
        case = ddu2()
        a = solve_mapping_ccg(case)
        b = solve_traditional_ccg(case)
        assert a.converged and b.converged
        assert a.objective < b.objective - (a.eps + b.eps)
        assert b.payments == pytest.approx(np.zeros(2), abs=1e-6)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(100))
    def test_mapping_never_loses_to_traditional(self, seed):
        case = make_random_case(seed, max_agents=2, max_periods=2, breakpoints=61)
        a = solve_ccg(case, mode="mapping")
        if a.termination == "infeasible":
            return
        b = solve_ccg(case, mode="traditional")
        if not (a.converged and b.converged and b.objective is not None):
            return
        assert a.objective <= b.objective + a.eps + b.eps + 1e-6


class TestBoundsTrace:
    def test_final_gap_within_eps(self, toy1_mapping):
        trace = bounds_trace(toy1_mapping)
        k, lb, ub = trace[-1]
        assert ub - lb <= toy1_mapping.eps + 1e-9

    def test_trivial_run_single_tuple(self):
        case = toy1().with_prediction_cost(0.0)
        rep = solve_ccg(case, mode="mapping", frozen_tau=[0.999], eps=10.0)
        trace = bounds_trace(rep)
        assert len(trace) == rep.n_iterations
        assert len(trace) >= 1

    def test_iterations_bounded_by_vertex_count(self, toy1_mapping):
        uset = build_set(toy1(), [0.0])
        n_u = enumerate_vertices(
            1, 1, uset.budget_spatial, uset.budget_temporal
        ).count
        cuts = sum(1 for r in toy1_mapping.iterations if r.status != "Converged")
        assert cuts <= n_u

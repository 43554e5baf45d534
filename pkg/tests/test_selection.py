import numpy as np
import pytest
from hypothesis import given, strategies as st

from cameta.errors import InvalidParams, LengthMismatch, NoValidPath
from cameta.gridworld import GridMap
from cameta.nn import zero_params
from cameta.planners import astar
from cameta.selection import evaluate_candidates, path_cost, plan_cameta, select_path
from cameta.simulator import AgentTask


class TestPathCost:
    def test_values(self):
        assert path_cost([90, 95], [100, 100]) == 17125
        assert path_cost([50, 100], [50, 100]) == 20000
        assert path_cost([10], [10]) == 100 and path_cost([0], [10]) == 0

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            path_cost([1, 2], [3])
        with pytest.raises(InvalidParams):
            path_cost([], [])

    @given(st.lists(st.tuples(st.integers(0, 200), st.integers(0, 200)), min_size=1, max_size=8),
           st.integers(0, 7), st.integers(1, 20))
    def test_monotone_when_valid(self, pairs, i, bump):
        tc = np.array([max(a, b) for a, b in pairs], float)
        etas = np.array([min(a, b) for a, b in pairs], float)
        i %= len(tc)
        assert path_cost(etas, tc) >= 0
        later = etas.copy()
        later[i] = min(later[i] + bump, tc[i])
        assert path_cost(later, tc) >= path_cost(etas, tc)


class TestSelectPath:
    def test_validity_gate(self):
        assert select_path([[10, 10], [120, 50]], [100, 100]) == 0
        assert select_path([[120, 50], [99, 99]], [100, 100]) == 1

    def test_cheaper_valid_wins(self):
        # equal TC of 100: costs 20000 and 17125
        assert select_path([[100, 100], [90, 95]], [100, 100]) == 1
        assert select_path([[90, 95], [100, 100]], [100, 100]) == 0

    def test_tie_goes_to_lower_index(self):
        assert select_path([[5, 6], [6, 5]], [10, 10]) == 0

    def test_no_valid_path(self):
        with pytest.raises(NoValidPath) as exc:
            select_path([[200, 1], [101, 100]], [100, 100])
        assert exc.value.best_invalid == 1

    def test_deadline_boundary(self):
        assert select_path([[100, 100]], [100, 100]) == 0
        with pytest.raises(NoValidPath):
            select_path([[100, 100]], [100, 100], inclusive=False)

    def test_empty(self):
        with pytest.raises(InvalidParams):
            select_path([], [1])

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            n, k = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            tc = rng.integers(5, 30, n).astype(float)
            cands = [rng.integers(0, 35, n).astype(float) for _ in range(k)]
            costs = [sum((tc.max() - (tc[j] - c[j])) ** 2 for j in range(n)) for c in cands]
            ok = [all(c[j] <= tc[j] for j in range(n)) for c in cands]
            evals = evaluate_candidates(cands, tc)
            assert [e.valid for e in evals] == ok
            assert [e.cost for e in evals] == pytest.approx(costs)
            if any(ok):
                expect = min((costs[i], i) for i in range(k) if ok[i])[1]
                assert select_path(cands, tc) == expect
            else:
                with pytest.raises(NoValidPath) as exc:
                    select_path(cands, tc)
                assert exc.value.best_invalid == min((costs[i], i) for i in range(k))[1]


class TestPlanCameta:
    def test_zero_model_commits_shortest(self):
        m = GridMap.from_rows([".....", ".###.", "....."])
        tasks = [AgentTask(0, (0, 1), (4, 1), 20), AgentTask(1, (0, 0), (2, 2), 20)]
        plans, log = plan_cameta(m, tasks, zero_params(9), k=3, tile_size=3)
        assert [len(p) for p in plans] == [len(astar(m, t.start, t.goal)) for t in tasks]
        assert [r["agent"] for r in log] == [0, 1]
        assert all(r["valid"] for r in log)

    def test_infeasible_deadline_still_commits(self):
        m = GridMap.empty(5, 5)
        tasks = [AgentTask(0, (0, 0), (4, 4), 2)]
        plans, log = plan_cameta(m, tasks, zero_params(25), k=2)
        assert plans[0].goal == (4, 4) and log[0]["valid"] is False

    def test_plans_connect_endpoints(self):
        m = GridMap.empty(8, 8)
        tasks = [AgentTask(i, (i, 0), (7 - i, 7), 30) for i in range(4)]
        plans, _ = plan_cameta(m, tasks, zero_params(25))
        assert [(p.start, p.goal) for p in plans] == [(t.start, t.goal) for t in tasks]

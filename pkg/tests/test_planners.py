import numpy as np
import pytest
from hypothesis import given, strategies as st

from cameta.errors import InvalidParams, NoPath, OccupiedGoal
from cameta.gridworld import GridMap, WarehouseGenParams, generate_warehouse_map
from cameta.planners import Path, astar, dijkstra_field, path_cost, suggest_routes
from oracles import penalized_cost, simple_paths


class TestPath:
    def test_rejects_jumps(self):
        with pytest.raises(InvalidParams):
            Path(((0, 0), (1, 1)))
        with pytest.raises(InvalidParams):
            Path(())

    def test_rest_before_and_after(self):
        p = Path(((0, 0), (1, 0), (2, 0)), start_time=2)
        assert p.arrival == 4
        assert [p.at(t) for t in range(7)] == [(0, 0)] * 3 + [(1, 0), (2, 0), (2, 0), (2, 0)]

    def test_edges_skip_waits(self):
        assert Path(((0, 0), (0, 0), (1, 0))).edges() == [((0, 0), (1, 0))]


class TestDijkstraField:
    def test_manhattan_on_empty(self):
        f = dijkstra_field(GridMap.empty(3, 3), (2, 2))
        assert f[0, 0] == 4 and f[2, 2] == 0

    def test_walled_off_is_inf(self):
        m = GridMap.from_rows([".#.", ".#.", ".#."])
        assert np.isinf(dijkstra_field(m, (0, 0))[1, 2])
        assert np.isinf(dijkstra_field(m, (0, 0))[0, 1])

    def test_occupied_goal(self):
        with pytest.raises(OccupiedGoal):
            dijkstra_field(GridMap.from_rows([".#", ".."]), (1, 0))

    def test_matches_bfs_on_random_maps(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            occ = (rng.random(64) < 0.3).astype(np.uint8)
            occ[0] = 0
            m = GridMap(8, 8, occ)
            f = dijkstra_field(m, (0, 0))
            # plain BFS reference
            ref = np.full((8, 8), np.inf)
            ref[0, 0] = 0
            frontier = [(0, 0)]
            while frontier:
                nxt = []
                for x, y in frontier:
                    for dx, dy in ((0, -1), (1, 0), (0, 1), (-1, 0)):
                        v = (x + dx, y + dy)
                        if m.is_free(v) and np.isinf(ref[v[1], v[0]]):
                            ref[v[1], v[0]] = ref[y, x] + 1
                            nxt.append(v)
                frontier = nxt
            assert np.array_equal(f, ref)


class TestAstar:
    def test_empty_grid_manhattan(self):
        p = astar(GridMap.empty(5, 5), (0, 0), (4, 4))
        assert len(p) == 9 and p.arrival == 8
        assert p.start == (0, 0) and p.goal == (4, 4)

    def test_enclosed_goal(self):
        m = GridMap.from_rows([".....", "..#..", ".#.#.", "..#.."])
        with pytest.raises(NoPath):
            astar(m, (0, 0), (2, 2))

    def test_tie_break_is_fixed(self):
        # all monotone paths tie; the rule picks the same one every time
        m = GridMap.empty(4, 4)
        assert astar(m, (0, 0), (3, 3)).cells == astar(m, (0, 0), (3, 3)).cells

    def test_penalties_force_detour(self):
        m = GridMap.empty(4, 4)
        pen = {((1, 0), (2, 0)): 10.0, ((0, 1), (1, 1)): 10.0}
        p = astar(m, (0, 0), (3, 0), pen)
        assert path_cost(p, pen) == 5.0

    def test_penalized_cost_matches_enumeration(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            occ = (rng.random(16) < 0.2).astype(np.uint8)
            occ[0] = occ[15] = 0
            m = GridMap(4, 4, occ)
            if not np.isfinite(dijkstra_field(m, (3, 3))[0, 0]):
                continue
            pen = {}
            for c in m.free_cells():
                for v in ((c[0] + 1, c[1]), (c[0], c[1] + 1), (c[0] - 1, c[1]), (c[0], c[1] - 1)):
                    if m.is_free(v) and rng.random() < 0.5:
                        pen[(c, v)] = float(rng.uniform(1.0, 3.0))
            p = astar(m, (0, 0), (3, 3), pen)
            best = min(penalized_cost(q, pen) for q in simple_paths(m.grid, (0, 0), (3, 3)))
            assert path_cost(p, pen) == pytest.approx(best, abs=1e-12)

    @given(st.integers(0, 10**6))
    def test_length_matches_distance_field(self, seed):
        m = generate_warehouse_map(WarehouseGenParams(seed=seed, width=12, height=12))
        free = m.free_cells()
        rng = np.random.default_rng(seed)
        s, g = (free[i] for i in rng.choice(len(free), 2, replace=False))
        p = astar(m, s, g)
        assert len(p) == dijkstra_field(m, g)[s[1], s[0]] + 1
        assert all(m.is_free(c) for c in p.cells)


class TestSuggestRoutes:
    def test_k1_is_plain_astar(self):
        m = GridMap.empty(5, 5)
        assert [r.cells for r in suggest_routes(m, (0, 0), (4, 4), 1)] == [astar(m, (0, 0), (4, 4)).cells]

    def test_two_corridors(self):
        m = GridMap.from_rows([".....", ".###.", "....."])
        routes = suggest_routes(m, (0, 1), (4, 1), 2)
        assert len(routes) == 2
        rows_used = sorted({c[1] for c in r.cells if 0 < c[0] < 4}.pop() for r in routes)
        assert rows_used == [0, 2]
        corridors = {tuple(q) for q in simple_paths(m.grid, (0, 1), (4, 1)) if len(q) == 7}
        assert {r.cells for r in routes} == corridors

    def test_open_3x3_routes_valid(self):
        m = GridMap.empty(3, 3)
        routes = suggest_routes(m, (0, 0), (2, 2), 10)
        assert 1 <= len(routes) <= 10
        assert len({r.cells for r in routes}) == len(routes)
        for r in routes:
            assert r.start == (0, 0) and r.goal == (2, 2)
        lengths = [len(r) for r in routes]
        assert lengths == sorted(lengths)

    def test_bad_k(self):
        with pytest.raises(InvalidParams):
            suggest_routes(GridMap.empty(3, 3), (0, 0), (2, 2), 0)

    def test_no_path(self):
        with pytest.raises(NoPath):
            suggest_routes(GridMap.from_rows([".#.", ".#."]), (0, 0), (2, 0), 3)

    @given(st.integers(0, 10**6), st.integers(1, 6))
    def test_routes_distinct_and_pure(self, seed, k):
        m = generate_warehouse_map(WarehouseGenParams(seed=seed, width=10, height=10))
        free = m.free_cells()
        rng = np.random.default_rng(seed)
        s, g = (free[i] for i in rng.choice(len(free), 2, replace=False))
        a = suggest_routes(m, s, g, k)
        b = suggest_routes(m, s, g, k)
        assert [r.cells for r in a] == [r.cells for r in b]
        assert len({r.cells for r in a}) == len(a) <= k
        assert a[0].arrival == astar(m, s, g).arrival

import dataclasses

import numpy as np
import pytest

from cameta.errors import LengthMismatch, MissingLabels, ShapeMismatch, ZeroLabel
from cameta.gridworld import GridMap
from cameta.hetgraph import build_graph
from cameta.nn import (
    DMS, IMS, Adam, ModelParams, TrainConfig, backward, decode, edge_update, encode,
    forward_recurrent, heat_layer, init_params, learning_rate, mae, mape, mape_grad, rmse,
    zero_params,
)
from cameta.nn import model as model_mod
from cameta.planners import Path
from cameta.simulator import AgentTask
from oracles import central_difference


def tiny_graph():
    m = GridMap.empty(4, 4)
    plans = [Path(((0, 0), (1, 0), (2, 0), (3, 0), (3, 1))), Path(((3, 3), (2, 3), (1, 3), (1, 2)))]
    tasks = [AgentTask(0, (0, 0), (3, 1), 8), AgentTask(1, (3, 3), (1, 2), 8)]
    return build_graph(m, plans, tasks, tile_size=2)


def three_step_graph():
    """Two robots, timestamps 0..2 each."""
    m = GridMap.empty(6, 4)
    plans = [Path(((0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (5, 0))),
             Path(((0, 3), (1, 3), (2, 3), (3, 3), (4, 3)))]
    tasks = [AgentTask(0, (0, 0), (5, 0), 9), AgentTask(1, (0, 3), (4, 3), 9)]
    return build_graph(m, plans, tasks, tile_size=2)


@pytest.fixture
def small_params():
    return init_params(4, 5, d=4, heads=3, zero_decoder=False)


class TestEncode:
    def test_zero_weights(self):
        g = tiny_graph()
        h, e = encode(g, zero_params(4))
        assert not h.any() and not e.any()
        assert h.shape == (g.n_floor + g.n_robot, 64) and e.shape == (g.n_eta, 64)

    def test_priority_zero_gives_relu_bias(self):
        g = tiny_graph()
        g = dataclasses.replace(g, priorities=np.zeros(g.n_robot))
        p = init_params(4, 0)
        h, _ = encode(g, p)
        assert np.array_equal(h[g.n_floor:], np.tile(np.maximum(p["enc_robot_b"], 0), (2, 1)))

    def test_golden(self, small_params):
        g = tiny_graph()
        h, e = encode(g, small_params)
        np.testing.assert_allclose(h[0], [0.0, 0.0, 0.17668935183106604, 0.0], atol=1e-12)
        np.testing.assert_allclose(
            h[g.n_floor], [0.3539153766890721, 0.7584608762925986, 0.0, 0.8257593238432767], atol=1e-12)
        np.testing.assert_allclose(e[0], [0.0, 0.33333491670892007, 0.0, 0.0], atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            encode(tiny_graph(), zero_params(9))


class TestHeatLayer:
    def test_single_node_self_loop(self):
        g = build_graph(GridMap.empty(2, 2), [], [], tile_size=2)
        p = init_params(4, 1)
        h, _ = encode(g, p)
        out, alpha = heat_layer(g, h, p, return_alpha=True)
        assert np.array_equal(alpha, np.ones((1, 3)))
        z = h[0] @ p["att_W"][0]
        np.testing.assert_allclose(out[0], np.maximum(z @ p["att_out_W"] + p["att_out_b"], 0), atol=1e-12)

    def test_two_identical_neighbours_share_weight(self):
        # the middle tile of a 6x2 strip sees its two mirror-image neighbours
        g = build_graph(GridMap.empty(6, 2), [], [], tile_size=2)
        p = init_params(4, 2)
        h, _ = encode(g, p)
        _, alpha = heat_layer(g, h, p, return_alpha=True)
        topo = model_mod.topology(g)
        lo, hi = topo.ptr[1], topo.ptr[2]
        nb = topo.src[lo:hi] != 1
        np.testing.assert_allclose(alpha[lo:hi][nb][0], alpha[lo:hi][nb][1], atol=1e-15)
        z = np.zeros_like(h)
        _, alpha = heat_layer(g, z, p, return_alpha=True)
        np.testing.assert_allclose(alpha[lo:hi], 1 / 3, atol=1e-15)

    def test_softmax_sums_to_one_and_permutation(self, small_params):
        g = three_step_graph()
        h, _ = encode(g, small_params)
        out, alpha = heat_layer(g, h, small_params, return_alpha=True)
        topo = model_mod.topology(g)
        sums = np.add.reduceat(alpha, topo.ptr[:-1], axis=0)
        np.testing.assert_allclose(sums, 1.0, atol=1e-9)
        rng = np.random.default_rng(0)
        s = g.static
        perm = rng.permutation(len(s.assoc_src))
        g2 = dataclasses.replace(
            g, static=dataclasses.replace(s, assoc_src=s.assoc_src[perm], assoc_dst=s.assoc_dst[perm]))
        assert np.max(np.abs(heat_layer(g2, h, small_params) - out)) <= 1e-12


class TestEdgeUpdate:
    def test_zero_w(self):
        g = tiny_graph()
        p = init_params(4, 3)
        p.values["upd_W"][:] = 0
        h, e = encode(g, p)
        assert np.array_equal(edge_update(h, e, p, g), np.tile(np.maximum(p["upd_b"], 0), (g.n_eta, 1)))

    def test_golden(self, small_params):
        g = tiny_graph()
        h, e = encode(g, small_params)
        u = edge_update(heat_layer(g, h, small_params), e, small_params, g)
        np.testing.assert_allclose(u[0], [0.0, 0.05414816477948693, 0.21121801621656458, 0.2194302514861737],
                                   atol=1e-12)

    def test_locality(self):
        g = tiny_graph()
        p = init_params(4, 4)
        h, e = encode(g, p)
        used = {g.n_floor + int(g.eta_robot[0]), int(g.eta_floor[0])}
        other = next(v for v in range(len(h)) if v not in used)
        h2 = h.copy()
        h2[other] = 2 * h2[other] + 1
        assert np.array_equal(edge_update(h, e, p, g, [0]), edge_update(h2, e, p, g, [0]))

    def test_shape_mismatch(self):
        g = tiny_graph()
        p = init_params(4, 4)
        with pytest.raises(ShapeMismatch):
            edge_update(np.zeros((g.n_floor + 2, 5)), np.zeros((g.n_eta, 64)), p, g)


class TestDecode:
    def test_zero_decoder_is_naive(self):
        g = tiny_graph()
        p = init_params(4, 0)
        _, e = encode(g, p)
        assert np.array_equal(decode(e, p, g.eta_arrival, g.t_scale), g.eta_arrival)

    def test_golden(self, small_params):
        g = tiny_graph()
        h, e = encode(g, small_params)
        u = edge_update(heat_layer(g, h, small_params), e, small_params, g)
        np.testing.assert_allclose(
            decode(u, small_params, g.eta_arrival, g.t_scale),
            [26.64949307188551, 29.62681126509695, 26.645045525415856, 28.636816209477235], atol=1e-9)

    def test_linear_in_features(self):
        p = init_params(4, 6, zero_decoder=False)
        rng = np.random.default_rng(1)
        a, b = rng.random((3, 64)), rng.random((3, 64))
        arr = np.zeros(3)

        def f(x):
            return decode(x, p, arr, 1.0) - p["dec_b"][0]

        np.testing.assert_allclose(f(2 * a + 3 * b), 2 * f(a) + 3 * f(b), atol=1e-12)


class TestRecurrent:
    def test_golden(self, small_params):
        pred = forward_recurrent(tiny_graph(), small_params, DMS)
        np.testing.assert_allclose(
            pred, [26.64949307188551, 54.54133399233834, 26.645045525415856, 53.54930061233211], atol=1e-9)

    def test_zero_model_is_naive(self):
        g = three_step_graph()
        for mode in (IMS, DMS):
            assert np.array_equal(forward_recurrent(g, zero_params(4), mode), g.eta_arrival)

    def test_single_timestamp_modes_agree(self, small_params):
        g = build_graph(GridMap.empty(4, 4), [Path(((0, 0), (1, 0)))], [AgentTask(0, (0, 0), (1, 0), 5)],
                        tile_size=2)
        assert g.t_max == 0
        g = g.with_labels([7.0])
        a = forward_recurrent(g, small_params, DMS)
        b = forward_recurrent(g, small_params, IMS, training=True)
        assert np.array_equal(a, b)

    def test_missing_labels(self, small_params):
        with pytest.raises(MissingLabels):
            forward_recurrent(three_step_graph(), small_params, IMS, training=True)

    def test_bad_layer_count(self, small_params):
        with pytest.raises(ValueError):
            forward_recurrent(tiny_graph(), small_params, layers_per_step=0)

    def test_feedback_probe(self, small_params, monkeypatch):
        g = three_step_graph()
        assert g.t_max == 2
        g = g.with_labels(g.eta_arrival + 3.0)
        base = {m: forward_recurrent(g, small_params, m, training=True) for m in (DMS, IMS)}
        original = model_mod._write_back

        def nudged(graph, arr, sel, value, T):
            # shift whatever the model fed back after step 0 if it was its own prediction
            own = np.allclose(value, base[DMS][sel]) and not np.allclose(value, graph.labels[sel])
            if T == 0 and own:
                value = value + 5.0
            return original(graph, arr, sel, value, T)

        monkeypatch.setattr(model_mod, "_write_back", nudged)
        at2 = g.eta_timestamp == 2
        dms = forward_recurrent(g, small_params, DMS)
        ims = forward_recurrent(g, small_params, IMS, training=True)
        assert np.all(np.abs(dms[at2] - base[DMS][at2]) > 1e-6)
        assert np.array_equal(ims, base[IMS])


class TestMetrics:
    def test_unit_vectors(self):
        assert mape([11, 18], [10, 20]) == pytest.approx(10.0, abs=1e-9)
        assert mae([11, 18], [10, 20]) == pytest.approx(1.5, abs=1e-9)
        assert rmse([11, 18], [10, 20]) == pytest.approx(np.sqrt(2.5), abs=1e-9)
        assert mape([0], [4]) == 100.0 and mae([0], [4]) == 4.0 and rmse([0], [4]) == 4.0
        assert mape([3, 5], [3, 5]) == mae([3, 5], [3, 5]) == rmse([3, 5], [3, 5]) == 0.0

    def test_errors(self):
        with pytest.raises(ZeroLabel):
            mape([1], [0])
        with pytest.raises(LengthMismatch):
            mae([1, 2], [1])

    def test_grad_matches_difference(self):
        pred = np.array([11.0, 18.0, 5.5])
        label = np.array([10.0, 20.0, 6.0])
        g = mape_grad(pred, label)
        for i in range(3):
            assert g[i] == pytest.approx(central_difference(lambda: mape(pred, label), pred, i), rel=1e-6)


class TestTraining:
    def test_lr_schedule(self):
        cfg = TrainConfig()
        assert learning_rate(cfg, 7) == 0.001
        assert learning_rate(cfg, 8) == pytest.approx(0.00075, abs=1e-15)
        assert learning_rate(cfg, 16) == pytest.approx(0.0005625, abs=1e-15)

    def test_zero_loss_zero_grad(self, small_params):
        g = three_step_graph()
        pred, tape = forward_recurrent(g, small_params, DMS, record=True)
        small_params.zero_grad()
        backward(tape, small_params, mape_grad(pred, pred))
        assert all(not v.any() for v in small_params.grads.values())

    def test_one_step_descends(self):
        g = three_step_graph()
        g = g.with_labels(g.eta_arrival + np.arange(1, g.n_eta + 1))
        p = init_params(4, 7)
        cfg = TrainConfig(lr=1e-4)

        def loss():
            return mape(forward_recurrent(g, p, DMS), g.labels)

        before = loss()
        pred, tape = forward_recurrent(g, p, DMS, record=True)
        p.zero_grad()
        backward(tape, p, mape_grad(pred, g.labels))
        Adam(p, cfg).step(p, 0)
        assert loss() < before

    @pytest.mark.parametrize("mode", [DMS, IMS])
    def test_gradient_two_layers_per_step(self, mode):
        g = three_step_graph()
        g = g.with_labels(g.eta_arrival + np.arange(1, g.n_eta + 1) * 0.7)
        p = init_params(4, 8, d=4, heads=2, zero_decoder=False)
        w = np.random.default_rng(3).normal(size=g.n_eta)

        def f():
            return float(w @ forward_recurrent(g, p, mode, training=True, layers_per_step=2))

        _, tape = forward_recurrent(g, p, mode, training=True, record=True, layers_per_step=2)
        p.zero_grad()
        backward(tape, p, w)
        for k in p.names():
            v = p.values[k]
            fd = np.array([central_difference(f, v, i) for i in np.ndindex(v.shape)]).reshape(v.shape)
            err = np.linalg.norm(fd - p.grads[k]) / max(np.linalg.norm(fd), np.linalg.norm(p.grads[k]), 1e-12)
            assert err <= 1e-4, k

    def test_checkpoint_round_trip(self):
        p = init_params(4, 9)
        q = ModelParams.from_json(p.to_json(), expect_n_patch=4)
        assert all(np.array_equal(p[k], q[k]) for k in p.names())
        with pytest.raises(ShapeMismatch):
            ModelParams.from_json(p.to_json(), expect_n_patch=9)

    def test_bad_blocks(self):
        vals = {k: v for k, v in init_params(4, 0).values.items()}
        vals["dec_W"] = np.zeros(3)
        with pytest.raises(ShapeMismatch):
            ModelParams(vals, 4)

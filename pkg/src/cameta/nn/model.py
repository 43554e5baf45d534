"""Arrival-time model: typed encoders, edge-enhanced typed attention, edge updater,
residual decoder, and the recurrent IMS/DMS decode with hand-written gradients.

Node indices: floor nodes ``0..n_floor-1`` then robots ``n_floor..``. Message
edges are the association edges (with floor self-loops), robot self-loops,
and every eta edge in both directions (robot -> floor and floor -> robot).
Messages on eta edges are enhanced with the projected eta-edge embedding.
Node embeddings come from the encoders at the first recurrent step and are
then carried: the attention output of step T is the node state of step T+1.
Each step re-encodes the eta edges from their current arrival estimates.
"""

import weakref
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import MissingLabels, NaNDetected, ShapeMismatch
from ..hetgraph import FLOOR, ROBOT

IMS, DMS = "IMS", "DMS"
LEAKY_SLOPE = 0.2


# ---------------------------------------------------------------------------
# message-passing topology
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Topology:
    n_floor: int
    n_nodes: int
    node_type: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    pair: np.ndarray      # src_type * 2 + dst_type
    ptr: np.ndarray       # CSR offsets over dst (edges sorted by dst)
    src_order: np.ndarray  # permutation sorting edges by src
    src_ptr: np.ndarray
    eta_fwd: np.ndarray   # message position of eta edge e (robot -> floor)
    eta_rev: np.ndarray   # message position of eta edge e (floor -> robot)


_TOPO_CACHE = weakref.WeakKeyDictionary()


def topology(graph):
    """Canonical message edge list, sorted by (dst, src, kind, eta id)."""
    topo = _TOPO_CACHE.get(graph)
    if topo is not None:
        return topo
    nf, nr, ne = graph.n_floor, graph.n_robot, graph.n_eta
    n = nf + nr
    node_type = np.concatenate([np.full(nf, FLOOR), np.full(nr, ROBOT)]).astype(np.int64)
    a_src, a_dst = graph.static.assoc_src, graph.static.assoc_dst
    robots = np.arange(nf, n, dtype=np.int64)
    eta_r = nf + graph.eta_robot
    eta_f = graph.eta_floor
    eids = np.arange(ne, dtype=np.int64)
    src = np.concatenate([a_src, robots, eta_r, eta_f])
    dst = np.concatenate([a_dst, robots, eta_f, eta_r])
    kind = np.concatenate([np.zeros(len(a_src) + nr), np.ones(ne), np.full(ne, 2)]).astype(np.int64)
    eta = np.concatenate([np.full(len(a_src) + nr, -1), eids, eids])
    order = np.lexsort((eta, kind, src, dst))
    src, dst, kind, eta = src[order], dst[order], kind[order], eta[order]
    counts = np.bincount(dst, minlength=n)
    if np.any(counts == 0):
        raise ShapeMismatch("every node needs at least its self-loop")
    ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    src_order = np.argsort(src, kind="stable")
    src_ptr = np.concatenate([[0], np.cumsum(np.bincount(src, minlength=n))]).astype(np.int64)
    eta_fwd = np.empty(ne, dtype=np.int64)
    eta_rev = np.empty(ne, dtype=np.int64)
    pos = np.arange(len(src))
    eta_fwd[eta[kind == 1]] = pos[kind == 1]
    eta_rev[eta[kind == 2]] = pos[kind == 2]
    topo = Topology(
        n_floor=nf, n_nodes=n, node_type=node_type, src=src, dst=dst,
        pair=node_type[src] * 2 + node_type[dst], ptr=ptr,
        src_order=src_order, src_ptr=src_ptr, eta_fwd=eta_fwd, eta_rev=eta_rev,
    )
    _TOPO_CACHE[graph] = topo
    return topo


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

def _relu(x):
    return np.maximum(x, 0.0)


def _check_width(x, width, what):
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeMismatch(f"{what}: expected (*, {width}), got {x.shape}")


def encode_nodes(graph, params):
    """(n_nodes, d) node embeddings: ReLU(W_type x + b) per node type."""
    xf = graph.floor_features()
    xr = graph.robot_features()
    _check_width(xf, params["enc_floor_W"].shape[0], "floor features")
    _check_width(xr, 1, "robot features")
    hf = _relu(xf @ params["enc_floor_W"] + params["enc_floor_b"])
    hr = _relu(xr @ params["enc_robot_W"] + params["enc_robot_b"])
    return np.concatenate([hf, hr], axis=0)


def encode_eta(x_eta, params):
    _check_width(x_eta, params["enc_eta_W"].shape[0], "eta features")
    return _relu(x_eta @ params["enc_eta_W"] + params["enc_eta_b"])


def encode(graph, params):
    """Node embeddings and eta-edge embeddings at the naive arrivals."""
    return encode_nodes(graph, params), encode_eta(graph.eta_features(), params)


def _project_nodes(topo, h, params):
    """Z[v] = h[v] @ W[type(v)], shape (n, H, d)."""
    H = params["att_src"].shape[1]
    d = params["att_src"].shape[2]
    Z = np.empty((topo.n_nodes, H * d))
    for t in (FLOOR, ROBOT):
        m = topo.node_type == t
        Z[m] = h[m] @ params["att_W"][t]
    return Z.reshape(topo.n_nodes, H, d)


def _heat_forward(topo, Z, eta_emb, params):
    H, d = Z.shape[1], Z.shape[2]
    msg = Z[topo.src]
    if len(eta_emb):
        Q = (eta_emb @ params["att_We"]).reshape(-1, H, d)
        msg[topo.eta_fwd] += Q
        msg[topo.eta_rev] += Q
    a_src = params["att_src"][topo.pair]
    a_dst = params["att_dst"][topo.pair]
    s = np.einsum("ehd,ehd->eh", msg, a_src) + np.einsum("ehd,ehd->eh", Z[topo.dst], a_dst)
    lr = np.where(s > 0, s, LEAKY_SLOPE * s)
    alpha = kernels.segment_softmax(lr, topo.ptr)
    agg = kernels.weighted_segment_sum(alpha, msg, topo.ptr)
    cat = agg.reshape(topo.n_nodes, H * d)
    pre = cat @ params["att_out_W"] + params["att_out_b"]
    cache = {"msg": msg, "s": s, "alpha": alpha, "cat": cat, "pre": pre, "a_src": a_src, "a_dst": a_dst}
    return _relu(pre), cache


def heat_layer(graph, node_feats, params, eta_feats=None, return_alpha=False):
    """One round of typed multi-head attention over 1-hop neighbourhoods.

    ``eta_feats`` are eta-edge embeddings (default: encoded naive features);
    they enhance the messages that travel along eta edges.
    """
    topo = topology(graph)
    _check_width(node_feats, params["att_W"].shape[1], "node features")
    if eta_feats is None:
        eta_feats = encode_eta(graph.eta_features(), params)
    Z = _project_nodes(topo, node_feats, params)
    out, cache = _heat_forward(topo, Z, eta_feats, params)
    if not np.all(np.isfinite(out)):
        raise NaNDetected("non-finite attention output")
    if return_alpha:
        return out, cache["alpha"]
    return out


def edge_update(node_feats, eta_feats, params, graph, edges=None):
    """e' = ReLU(W [h_robot | h_floor | e] + b) for the selected eta edges."""
    d = params["upd_b"].shape[0]
    _check_width(node_feats, d, "node features")
    _check_width(eta_feats, d, "eta features")
    sel = np.arange(graph.n_eta) if edges is None else np.asarray(edges)
    inp = np.concatenate(
        [node_feats[graph.n_floor + graph.eta_robot[sel]], node_feats[graph.eta_floor[sel]], eta_feats[sel]],
        axis=1,
    )
    return _relu(inp @ params["upd_W"] + params["upd_b"])


def decode(eta_feats, params, arrival, t_scale):
    """Residual arrival prediction: current arrival + t_scale * (w . e + b)."""
    return arrival + t_scale * (eta_feats @ params["dec_W"] + params["dec_b"][0])


# ---------------------------------------------------------------------------
# recurrent decode
# ---------------------------------------------------------------------------

@dataclass
class Tape:
    graph: object
    mode: str
    differentiable_feedback: bool
    h0: np.ndarray
    steps: list = field(default_factory=list)
    pred: np.ndarray = None


def forward_recurrent(graph, params, mode=DMS, teacher_labels=None, training=False, record=False,
                      layers_per_step=1):
    """Predict the arrival at every eta edge, one timestamp per recurrent step.

    After decoding the edges of timestamp T their arrival feature is
    overwritten and the robot's later edges shift by the same amount. The
    written value is the model's own prediction, except in IMS training
    where it is the label (teacher forcing). Each step applies the attention
    layer ``layers_per_step`` times with shared weights. Returns the
    predictions, and the tape needed by :func:`backward` when ``record`` is
    set.
    """
    if mode not in (IMS, DMS):
        raise ValueError(f"mode must be {IMS!r} or {DMS!r}")
    if layers_per_step < 1:
        raise ValueError("layers_per_step must be >= 1")
    teacher = mode == IMS and training
    if teacher:
        if teacher_labels is None:
            teacher_labels = graph.labels
        if teacher_labels is None:
            raise MissingLabels("IMS training needs ground-truth arrivals")
        teacher_labels = np.asarray(teacher_labels, dtype=np.float64)
    topo = topology(graph)
    ts_scale = graph.t_scale
    h0 = encode_nodes(graph, params)
    h = h0
    tape = Tape(graph, mode, not teacher, h0) if record else None
    arr = graph.eta_arrival.copy()
    pred = np.zeros(graph.n_eta)
    ts = graph.eta_timestamp
    for T in range(graph.t_max + 1):
        x = graph.eta_features(arr)
        pre_e = x @ params["enc_eta_W"] + params["enc_eta_b"]
        e = _relu(pre_e)
        layers = []
        hn = h
        for _ in range(layers_per_step):
            Z = _project_nodes(topo, hn, params)
            h_in = hn
            hn, hc = _heat_forward(topo, Z, e, params)
            layers.append((h_in, Z, hc))
        sel = np.nonzero(ts == T)[0]
        inp = np.concatenate([hn[topo.n_floor + graph.eta_robot[sel]], hn[graph.eta_floor[sel]], e[sel]], axis=1)
        pre_u = inp @ params["upd_W"] + params["upd_b"]
        eu = _relu(pre_u)
        p = arr[sel] + ts_scale * (eu @ params["dec_W"] + params["dec_b"][0])
        if not np.all(np.isfinite(p)):
            raise NaNDetected(f"non-finite prediction at timestamp {T}")
        pred[sel] = p
        if record:
            tape.steps.append({"sel": sel, "x": x, "pre_e": pre_e, "e": e, "layers": layers,
                               "inp": inp, "pre_u": pre_u, "eu": eu})
        h = hn
        fb = teacher_labels[sel] if teacher else p
        arr = _write_back(graph, arr, sel, fb, T)
    if record:
        tape.pred = pred
        return pred, tape
    return pred


def _write_back(graph, arr, sel, value, T):
    delta = np.zeros(graph.n_robot)
    delta[graph.eta_robot[sel]] = value - arr[sel]
    out = arr.copy()
    out[sel] = value
    later = graph.eta_timestamp > T
    out[later] += delta[graph.eta_robot[later]]
    return out


def backward(tape, params, dpred):
    """Accumulate dL/dparams into ``params.grads`` given dL/dpred per eta edge.

    Gradients run through the whole unroll. With model feedback (DMS and IMS
    inference) they also flow through the written-back arrivals; teacher
    labels are constants.
    """
    g = tape.graph
    topo = topology(g)
    P = params.values
    G = params.grads
    nf = topo.n_floor
    d = tape.h0.shape[1]
    ts_scale = g.t_scale
    dpred = np.asarray(dpred, dtype=np.float64)
    dh_next = np.zeros_like(tape.h0)  # dL/d node state entering the step after T
    g_arr = np.zeros(g.n_eta)  # dL/d arrival state after the current step
    for T in range(len(tape.steps) - 1, -1, -1):
        st = tape.steps[T]
        sel = st["sel"]
        dp = dpred[sel].copy()
        # through the write-back: arr_next = arr with sel set to fb, later shifted
        g_prev = g_arr.copy()
        later = g.eta_timestamp > T
        by_robot = np.bincount(g.eta_robot[later], weights=g_arr[later], minlength=g.n_robot)
        dfb = g_arr[sel] + by_robot[g.eta_robot[sel]]
        g_prev[sel] = -by_robot[g.eta_robot[sel]]
        if tape.differentiable_feedback:
            dp += dfb
        g_arr = g_prev
        # residual decoder
        g_arr[sel] += dp
        dout = ts_scale * dp
        G["dec_W"] += st["eu"].T @ dout
        G["dec_b"][0] += dout.sum()
        deu = np.outer(dout, P["dec_W"])
        dpre_u = deu * (st["pre_u"] > 0)
        G["upd_W"] += st["inp"].T @ dpre_u
        G["upd_b"] += dpre_u.sum(0)
        dinp = dpre_u @ P["upd_W"].T
        dhn = dh_next
        np.add.at(dhn, nf + g.eta_robot[sel], dinp[:, :d])
        np.add.at(dhn, g.eta_floor[sel], dinp[:, d:2 * d])
        de = np.zeros((g.n_eta, d))
        de[sel] += dinp[:, 2 * d:]
        # attention
        for h_in, Z, hc in reversed(st["layers"]):
            dZ = np.zeros_like(Z)
            de += _heat_backward(topo, Z, st["e"], hc, dhn, params, dZ)
            dhn = _project_backward(topo, h_in, dZ, params)
        dh_next = dhn
        # eta encoder
        dpre_e = de * (st["pre_e"] > 0)
        G["enc_eta_W"] += st["x"].T @ dpre_e
        G["enc_eta_b"] += dpre_e.sum(0)
        dx = dpre_e @ P["enc_eta_W"].T
        g_arr += dx[:, 1] / ts_scale
    # node encoders feed the first step only
    dh = dh_next * (tape.h0 > 0)
    G["enc_floor_W"] += g.floor_features().T @ dh[:nf]
    G["enc_floor_b"] += dh[:nf].sum(0)
    G["enc_robot_W"] += g.robot_features().T @ dh[nf:]
    G["enc_robot_b"] += dh[nf:].sum(0)
    for k, v in G.items():
        if not np.all(np.isfinite(v)):
            raise NaNDetected(f"non-finite gradient in block {k}")


def _project_backward(topo, h, dZ, params):
    """Gradient of Z = h @ W[type] into ``att_W``; returns dL/dh."""
    P, G = params.values, params.grads
    n = dZ.shape[0]
    dZf = dZ.reshape(n, -1)
    dh = np.empty_like(h)
    for t in (FLOOR, ROBOT):
        m = topo.node_type == t
        G["att_W"][t] += h[m].T @ dZf[m]
        dh[m] = dZf[m] @ P["att_W"][t].T
    return dh


def _heat_backward(topo, Z, eta_emb, cache, dout, params, dZ):
    """Backprop one attention layer; adds into ``params.grads`` and ``dZ``,
    returns dL/d eta embeddings."""
    P, G = params.values, params.grads
    n, H, d = Z.shape
    dpre = dout * (cache["pre"] > 0)
    G["att_out_W"] += cache["cat"].T @ dpre
    G["att_out_b"] += dpre.sum(0)
    dagg = (dpre @ P["att_out_W"].T).reshape(n, H, d)
    msg, alpha = cache["msg"], cache["alpha"]
    dalpha, dmsg = kernels.weighted_segment_sum_backward(alpha, msg, dagg, topo.dst)
    dlr = kernels.segment_softmax_backward(alpha, dalpha, topo.ptr)
    ds = dlr * np.where(cache["s"] > 0, 1.0, LEAKY_SLOPE)
    dmsg += ds[:, :, None] * cache["a_src"]
    dZdst = ds[:, :, None] * cache["a_dst"]
    Zdst = Z[topo.dst]
    for p in range(P["att_src"].shape[0]):
        m = topo.pair == p
        if m.any():
            G["att_src"][p] += np.einsum("eh,ehd->hd", ds[m], msg[m])
            G["att_dst"][p] += np.einsum("eh,ehd->hd", ds[m], Zdst[m])
    dZ += np.add.reduceat(dZdst, topo.ptr[:-1], axis=0)
    dZ += np.add.reduceat(dmsg[topo.src_order], topo.src_ptr[:-1], axis=0)
    if len(eta_emb) == 0:
        return np.zeros_like(eta_emb)
    dQ = (dmsg[topo.eta_fwd] + dmsg[topo.eta_rev]).reshape(len(eta_emb), H * d)
    G["att_We"] += eta_emb.T @ dQ
    return dQ @ P["att_We"].T

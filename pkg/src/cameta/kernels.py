"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time. Set ``CAMETA_DISABLE_NUMBA=1``
to force the numpy implementations (useful for debugging, coverage, or
platforms without numba). Both backends implement identical contracts and
the test-suite checks them against each other.

Segment conventions: edges are sorted by destination and ``ptr`` is the
CSR offset array of length ``n_nodes + 1``; every segment is non-empty
(each node carries a self-loop).
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_DISABLED = os.environ.get("CAMETA_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")
HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"

INF = np.inf


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _np_grid_distances(free, width, seeds, seed_vals):
    """Multi-source unit-weight shortest distances on a 4-connected grid.

    ``free`` is a flat bool array; ``seeds``/``seed_vals`` give start cells
    and their initial distances. Wavefront expansion over whole-array shifts.
    """
    height = free.size // width
    grid_free = free.reshape(height, width)
    dist = np.full((height, width), INF)
    if len(seeds) == 0:
        return dist.ravel()
    sy, sx = np.divmod(np.asarray(seeds, dtype=np.int64), width)
    sv = np.asarray(seed_vals, dtype=np.int64)
    order = np.argsort(sv, kind="stable")
    sy, sx, sv = sy[order], sx[order], sv[order]
    d = int(sv[0])
    k = 0
    frontier = np.zeros((height, width), dtype=bool)
    visited = np.zeros((height, width), dtype=bool)
    while True:
        while k < len(sv) and sv[k] == d:
            if not visited[sy[k], sx[k]] and grid_free[sy[k], sx[k]]:
                frontier[sy[k], sx[k]] = True
            k += 1
        frontier &= ~visited
        if not frontier.any():
            if k >= len(sv):
                break
            d = int(sv[k])
            continue
        visited |= frontier
        dist[frontier] = d
        nxt = np.zeros_like(frontier)
        nxt[1:, :] |= frontier[:-1, :]
        nxt[:-1, :] |= frontier[1:, :]
        nxt[:, 1:] |= frontier[:, :-1]
        nxt[:, :-1] |= frontier[:, 1:]
        frontier = nxt & grid_free & ~visited
        d += 1
    return dist.ravel()


def _np_segment_softmax(scores, ptr):
    starts = ptr[:-1]
    counts = np.diff(ptr)
    mx = np.maximum.reduceat(scores, starts, axis=0)
    ex = np.exp(scores - np.repeat(mx, counts, axis=0))
    den = np.add.reduceat(ex, starts, axis=0)
    return ex / np.repeat(den, counts, axis=0)


def _np_segment_softmax_backward(alpha, dalpha, ptr):
    starts = ptr[:-1]
    counts = np.diff(ptr)
    inner = np.add.reduceat(alpha * dalpha, starts, axis=0)
    return alpha * (dalpha - np.repeat(inner, counts, axis=0))


def _np_weighted_segment_sum(alpha, msg, ptr):
    return np.add.reduceat(alpha[:, :, None] * msg, ptr[:-1], axis=0)


def _np_weighted_segment_sum_backward(alpha, msg, dout, dst):
    g = dout[dst]
    dalpha = np.einsum("ehd,ehd->eh", g, msg)
    dmsg = alpha[:, :, None] * g
    return dalpha, dmsg


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _nb_grid_distances(free, width, seeds, seed_vals):
        n = free.size
        dist = np.full(n, np.inf)
        m = seeds.size
        if m == 0:
            return dist
        base = seed_vals.min()
        span = seed_vals.max() - base + n + 1
        # bucket queue as singly linked lists; each cell is pushed <= 4 times
        head = np.full(span, -1, dtype=np.int64)
        cap = m + 4 * n
        nxt = np.empty(cap, dtype=np.int64)
        item = np.empty(cap, dtype=np.int64)
        cnt = 0
        for j in range(m):
            b = seed_vals[j] - base
            item[cnt] = seeds[j]
            nxt[cnt] = head[b]
            head[b] = cnt
            cnt += 1
        done = np.zeros(n, dtype=np.bool_)
        for b in range(span - 1):
            p = head[b]
            while p != -1:
                c = item[p]
                p = nxt[p]
                if done[c] or not free[c]:
                    continue
                done[c] = True
                dist[c] = base + b
                y = c // width
                x = c - y * width
                for k in range(4):
                    if k == 0:
                        if y == 0:
                            continue
                        nc = c - width
                    elif k == 1:
                        if x == width - 1:
                            continue
                        nc = c + 1
                    elif k == 2:
                        if c + width >= n:
                            continue
                        nc = c + width
                    else:
                        if x == 0:
                            continue
                        nc = c - 1
                    if done[nc] or not free[nc]:
                        continue
                    item[cnt] = nc
                    nxt[cnt] = head[b + 1]
                    head[b + 1] = cnt
                    cnt += 1
        return dist

    @numba.njit(cache=True)
    def _nb_segment_softmax(scores, ptr):
        E, H = scores.shape
        out = np.empty_like(scores)
        for v in range(ptr.size - 1):
            a = ptr[v]
            b = ptr[v + 1]
            for h in range(H):
                mx = -np.inf
                for e in range(a, b):
                    if scores[e, h] > mx:
                        mx = scores[e, h]
                den = 0.0
                for e in range(a, b):
                    ex = np.exp(scores[e, h] - mx)
                    out[e, h] = ex
                    den += ex
                for e in range(a, b):
                    out[e, h] = out[e, h] / den
        return out

    @numba.njit(cache=True)
    def _nb_segment_softmax_backward(alpha, dalpha, ptr):
        E, H = alpha.shape
        out = np.empty_like(alpha)
        for v in range(ptr.size - 1):
            a = ptr[v]
            b = ptr[v + 1]
            for h in range(H):
                inner = 0.0
                for e in range(a, b):
                    inner += alpha[e, h] * dalpha[e, h]
                for e in range(a, b):
                    out[e, h] = alpha[e, h] * (dalpha[e, h] - inner)
        return out

    @numba.njit(cache=True)
    def _nb_weighted_segment_sum(alpha, msg, ptr):
        E, H, D = msg.shape
        n = ptr.size - 1
        out = np.zeros((n, H, D))
        for v in range(n):
            for e in range(ptr[v], ptr[v + 1]):
                for h in range(H):
                    w = alpha[e, h]
                    for d in range(D):
                        out[v, h, d] += w * msg[e, h, d]
        return out

    @numba.njit(cache=True)
    def _nb_weighted_segment_sum_backward(alpha, msg, dout, dst):
        E, H, D = msg.shape
        dalpha = np.zeros((E, H))
        dmsg = np.empty_like(msg)
        for e in range(E):
            v = dst[e]
            for h in range(H):
                s = 0.0
                w = alpha[e, h]
                for d in range(D):
                    g = dout[v, h, d]
                    s += g * msg[e, h, d]
                    dmsg[e, h, d] = w * g
                dalpha[e, h] = s
        return dalpha, dmsg


# ---------------------------------------------------------------------------
# public dispatch
# ---------------------------------------------------------------------------

def grid_distances(free, width, seeds, seed_vals, backend=None):
    """Distances (float64, ``inf`` if unreachable) from seeded cells.

    ``free`` is a flat boolean occupancy mask, row-major with ``width``
    columns. Each seed cell starts at its own integer offset.
    """
    free = np.ascontiguousarray(free, dtype=np.bool_)
    seeds = np.ascontiguousarray(seeds, dtype=np.int64)
    seed_vals = np.ascontiguousarray(seed_vals, dtype=np.int64)
    if _pick(backend) == "numba":
        return _nb_grid_distances(free, int(width), seeds, seed_vals)
    return _np_grid_distances(free, int(width), seeds, seed_vals)


def segment_softmax(scores, ptr, backend=None):
    if _pick(backend) == "numba":
        return _nb_segment_softmax(np.ascontiguousarray(scores), ptr)
    return _np_segment_softmax(scores, ptr)


def segment_softmax_backward(alpha, dalpha, ptr, backend=None):
    if _pick(backend) == "numba":
        return _nb_segment_softmax_backward(alpha, np.ascontiguousarray(dalpha), ptr)
    return _np_segment_softmax_backward(alpha, dalpha, ptr)


def weighted_segment_sum(alpha, msg, ptr, backend=None):
    if _pick(backend) == "numba":
        return _nb_weighted_segment_sum(alpha, np.ascontiguousarray(msg), ptr)
    return _np_weighted_segment_sum(alpha, msg, ptr)


def weighted_segment_sum_backward(alpha, msg, dout, dst, backend=None):
    if _pick(backend) == "numba":
        return _nb_weighted_segment_sum_backward(
            alpha, np.ascontiguousarray(msg), np.ascontiguousarray(dout), dst
        )
    return _np_weighted_segment_sum_backward(alpha, msg, dout, dst)


def _pick(backend):
    if backend is None:
        return BACKEND
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend

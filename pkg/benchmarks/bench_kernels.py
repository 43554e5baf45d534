"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 20]

Each kernel is called once per backend before timing so numba compilation
is excluded. Results are also checked for agreement.
"""

import argparse
import timeit

import numpy as np

from cameta import kernels
from cameta.gridworld import WarehouseGenParams, generate_warehouse_map


def attention_inputs(rng, n_nodes=2000, max_deg=8, heads=3, d=64):
    counts = rng.integers(1, max_deg + 1, n_nodes)
    ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    dst = np.repeat(np.arange(n_nodes), counts).astype(np.int64)
    E = int(ptr[-1])
    return {
        "ptr": ptr,
        "dst": dst,
        "scores": rng.normal(size=(E, heads)),
        "msg": rng.normal(size=(E, heads, d)),
        "dout": rng.normal(size=(n_nodes, heads, d)),
    }


def cases(rng):
    m = generate_warehouse_map(WarehouseGenParams(seed=1, width=96, height=96))
    free = m.grid.ravel() == 0
    seeds = np.array([int(np.flatnonzero(free)[0])])
    a = attention_inputs(rng)
    alpha = kernels.segment_softmax(a["scores"], a["ptr"], backend="numpy")
    return {
        "grid_distances 96x96": lambda b: kernels.grid_distances(free, m.width, seeds, [0], backend=b),
        "segment_softmax": lambda b: kernels.segment_softmax(a["scores"], a["ptr"], backend=b),
        "segment_softmax_backward": lambda b: kernels.segment_softmax_backward(
            alpha, a["scores"], a["ptr"], backend=b),
        "weighted_segment_sum": lambda b: kernels.weighted_segment_sum(alpha, a["msg"], a["ptr"], backend=b),
        "weighted_segment_sum_backward": lambda b: kernels.weighted_segment_sum_backward(
            alpha, a["msg"], a["dout"], a["dst"], backend=b),
    }


def _same(x, y):
    if isinstance(x, tuple):
        return all(_same(a, b) for a, b in zip(x, y))
    return np.allclose(x, y, rtol=1e-10, atol=1e-12)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}  agree")
    for name, fn in cases(rng).items():
        ref, fast = fn("numpy"), fn("numba")
        t_np = min(timeit.repeat(lambda: fn("numpy"), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: fn("numba"), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:32s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.1f}  {_same(ref, fast)}")


if __name__ == "__main__":
    main()

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cameta import kernels

needs_numba = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")


def random_segments(rng, n_nodes, max_deg=5):
    counts = rng.integers(1, max_deg + 1, n_nodes)
    ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    dst = np.repeat(np.arange(n_nodes), counts).astype(np.int64)
    return ptr, dst


@needs_numba
@given(st.integers(0, 2**32), st.integers(1, 12), st.integers(1, 4), st.integers(1, 6))
def test_attention_kernels_agree(seed, n, heads, d):
    rng = np.random.default_rng(seed)
    ptr, dst = random_segments(rng, n)
    E = ptr[-1]
    scores = rng.normal(size=(E, heads)) * 3
    msg = rng.normal(size=(E, heads, d))
    dout = rng.normal(size=(n, heads, d))
    outs = {}
    for b in ("numpy", "numba"):
        alpha = kernels.segment_softmax(scores, ptr, backend=b)
        agg = kernels.weighted_segment_sum(alpha, msg, ptr, backend=b)
        da, dm = kernels.weighted_segment_sum_backward(alpha, msg, dout, dst, backend=b)
        ds = kernels.segment_softmax_backward(alpha, da, ptr, backend=b)
        outs[b] = (alpha, agg, da, dm, ds)
    for a, b in zip(outs["numpy"], outs["numba"]):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(np.add.reduceat(outs["numpy"][0], ptr[:-1], axis=0), 1.0, atol=1e-12)


@needs_numba
@given(st.integers(0, 2**32), st.integers(2, 15), st.integers(2, 15))
def test_grid_distances_agree(seed, w, h):
    rng = np.random.default_rng(seed)
    free = rng.random(w * h) > 0.3
    cells = np.nonzero(free)[0]
    if cells.size == 0:
        return
    seeds = rng.choice(cells, size=min(3, cells.size), replace=False)
    vals = rng.integers(0, 4, seeds.size)
    a = kernels.grid_distances(free, w, seeds, vals, backend="numpy")
    b = kernels.grid_distances(free, w, seeds, vals, backend="numba")
    assert np.array_equal(a, b)


def test_softmax_backward_matches_difference():
    rng = np.random.default_rng(0)
    ptr, _ = random_segments(rng, 4)
    s = rng.normal(size=(ptr[-1], 2))
    w = rng.normal(size=s.shape)
    alpha = kernels.segment_softmax(s, ptr, backend="numpy")
    ds = kernels.segment_softmax_backward(alpha, w, ptr, backend="numpy")
    eps = 1e-6
    for idx in np.ndindex(s.shape):
        sp, sm = s.copy(), s.copy()
        sp[idx] += eps
        sm[idx] -= eps
        fd = (np.sum(w * kernels.segment_softmax(sp, ptr, backend="numpy"))
              - np.sum(w * kernels.segment_softmax(sm, ptr, backend="numpy"))) / (2 * eps)
        assert ds[idx] == pytest.approx(fd, abs=1e-8)


def test_bad_backend():
    with pytest.raises(ValueError):
        kernels.segment_softmax(np.zeros((1, 1)), np.array([0, 1]), backend="cuda")


def test_env_switch_selects_numpy():
    code = "import cameta.kernels as k; print(k.BACKEND)"
    env = {**os.environ, "CAMETA_DISABLE_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"

"""Compiled and numpy backends must agree."""

import numpy as np
import pytest

from conftest import random_inputs
from vsprefill import kernels

pytestmark = pytest.mark.skipif(
    kernels._ckernels is None, reason="compiled kernels not built"
)


def backends():
    return kernels.get_backend("cython"), kernels.get_backend("numpy")


@pytest.mark.parametrize("n,block", [(1, 1), (33, 7), (128, 64), (257, 64)])
def test_flash_and_aggregate_parity(n, block):
    c, p = backends()
    inp = random_inputs(n, 8, n + block, scale=2.0)
    args = (inp.q, inp.k, inp.v, inp.scale, block)
    assert np.max(np.abs(c.flash_forward(*args) - p.flash_forward(*args))) <= 1e-12
    cv, cs = c.vs_aggregate(inp.q, inp.k, inp.scale, block)
    pv, ps = p.vs_aggregate(inp.q, inp.k, inp.scale, block)
    assert np.max(np.abs(cv - pv)) <= 1e-11 and np.max(np.abs(cs - ps)) <= 1e-11
    cm, cl = c.row_stats(inp.q, inp.k, inp.scale, block)
    pm, pl = p.row_stats(inp.q, inp.k, inp.scale, block)
    assert np.allclose(cm, pm, rtol=0, atol=1e-12) and np.allclose(cl, pl, rtol=1e-12)


def test_sparse_and_merge_parity():
    c, p = backends()
    rng = np.random.default_rng(0)
    for trial in range(30):
        n = int(rng.integers(1, 70))
        inp = random_inputs(n, 4, trial)
        i_v = np.sort(rng.choice(n, int(rng.integers(0, n + 1)), replace=False)).astype(np.int64)
        i_s = np.union1d(rng.choice(n, int(rng.integers(0, n + 1)), replace=False), [0]).astype(np.int64)
        block = int(rng.integers(1, 20))
        oc, bc = c.sparse_forward(inp.q, inp.k, inp.v, i_v, i_s, inp.scale, block)
        op, bp = p.sparse_forward(inp.q, inp.k, inp.v, i_v, i_s, inp.scale, block)
        assert bc == bp == -1
        assert np.max(np.abs(oc - op)) <= 1e-12
        row = int(rng.integers(0, n))
        assert np.array_equal(c.merge_row(i_v, i_s, row), p.merge_row(i_v, i_s, row))


def test_uncovered_row_reported_by_both():
    c, p = backends()
    inp = random_inputs(5, 2, 1)
    i_v = np.array([], dtype=np.int64)
    i_s = np.array([1], dtype=np.int64)
    assert c.sparse_forward(inp.q, inp.k, inp.v, i_v, i_s, inp.scale, 2)[1] == 0
    assert p.sparse_forward(inp.q, inp.k, inp.v, i_v, i_s, inp.scale, 2)[1] == 0


def test_use_backend_switch():
    original = kernels.BACKEND
    try:
        kernels.use_backend("numpy")
        assert kernels.BACKEND == "numpy"
        kernels.use_backend("cython")
        assert kernels.BACKEND == "cython"
    finally:
        kernels.use_backend(original)
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")

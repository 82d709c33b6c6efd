import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pimkit import gemv as G
from pimkit.isa import ContractError
from pimkit.transfer import AllocationPolicy, BALANCED, allocate_ranks


def test_plan_examples():
    assert G.plan_gemv(2551, 1024, 2551).rows_per_dpu == [1] * 2551
    assert G.plan_gemv(100, 32, 7).rows_per_dpu == [15, 15, 14, 14, 14, 14, 14]
    with pytest.raises(ContractError):
        G.plan_gemv(10, 33, 1, G.INT4)
    with pytest.raises(ContractError):
        G.plan_gemv(3, 32, 4)


@given(st.integers(1, 5000), st.integers(1, 300))
def test_plan_invariants(rows, dpus):
    if rows < dpus:
        return
    p = G.plan_gemv(rows, 64, dpus)
    assert p.row_ranges[0][0] == 0 and p.row_ranges[-1][1] == rows
    assert all(a[1] == b[0] for a, b in zip(p.row_ranges, p.row_ranges[1:]))
    assert max(p.rows_per_dpu) - min(p.rows_per_dpu) <= 1


def test_functional_examples():
    eye = np.eye(64, dtype=np.int8)
    v = np.arange(-32, 32, dtype=np.int8)
    assert np.array_equal(G.run_gemv_functional(G.plan_gemv(64, 64, 3), eye, v), v)
    ones = np.ones((5, 32), np.int8)
    out = G.run_gemv_functional(G.plan_gemv(5, 32, 2, G.INT4), ones, np.ones(32, np.int8))
    assert out.tolist() == [32] * 5


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(G.DTYPES), st.integers(1, 40), st.integers(1, 4), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_tiling_invariance(dtype, rows, col_blocks, dpus, seed):
    rows = max(rows, dpus)
    cols = 32 * col_blocks
    lo, hi = (-128, 127) if dtype == G.INT8 else (-8, 7)
    rng = np.random.default_rng(seed)
    m = rng.integers(lo, hi, (rows, cols), endpoint=True, dtype=np.int8)
    v = rng.integers(lo, hi, cols, endpoint=True, dtype=np.int8)
    expected = G.naive_gemv(m, v)
    assert np.array_equal(G.run_gemv_functional(G.plan_gemv(rows, cols, dpus, dtype), m, v), expected)
    assert np.array_equal(G.run_gemv_functional(G.plan_gemv(rows, cols, 1, dtype), m, v), expected)


def test_wrapping_accumulator():
    m = np.full((1, 1 << 17), -128, np.int8)
    v = np.full(1 << 17, -128, np.int8)
    out = G.run_gemv_functional(G.plan_gemv(1, 1 << 17, 1), m, v)
    assert out[0] == np.int32(np.int64(128 * 128 * (1 << 17)) - (1 << 32))


def test_shape_mismatch():
    with pytest.raises(ContractError):
        G.run_gemv_functional(G.plan_gemv(4, 32, 1), np.zeros((4, 64), np.int8), np.zeros(64, np.int8))


def test_estimate_properties():
    dpus = 2551
    prev = 0.0
    for size in G.MATRIX_SIZES:
        for dtype in G.DTYPES:
            plan = G.plan_for_bytes(size, dtype, dpus)
            mv, v = G.estimate_gemv(plan, "MV"), G.estimate_gemv(plan, "V")
            assert v.matrix_transfer_s == 0 and v.total_s < mv.total_s
            assert v.gops == pytest.approx(plan.ops / v.total_s / 1e9)
        g = G.estimate_gemv(G.plan_for_bytes(size, G.INT8, dpus), "V").gops
        assert g >= prev
        prev = g
    assert G.instructions_per_element(G.INT4) < G.instructions_per_element(G.INT8)


def test_estimate_needs_enough_dpus():
    plan = G.plan_gemv(1000, 64, 200)
    with pytest.raises(ContractError):
        G.estimate_gemv(plan, "V", allocate_ranks(2, AllocationPolicy(BALANCED)))
    with pytest.raises(ContractError):
        G.estimate_gemv(plan, "X")

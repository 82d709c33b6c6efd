import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pimkit.bsdp import (
    SIGNED_SUBTRACT_PAIRS,
    BsdpSchedule,
    bsdp_dot,
    decode,
    encode,
    naive_dot,
    native_dot_instructions,
    transpose_to_bitplanes,
    value_range,
)
from pimkit.isa import ContractError, Opcode


def vectors(signed, max_blocks=4):
    lo, hi = value_range(signed)
    return st.integers(1, max_blocks).flatmap(
        lambda nb: st.tuples(st.lists(st.integers(lo, hi), min_size=32 * nb, max_size=32 * nb),
                             st.lists(st.integers(lo, hi), min_size=32 * nb, max_size=32 * nb)))


def test_transpose_examples():
    v = transpose_to_bitplanes([5] * 32)
    assert v.planes[:, 0].tolist() == [0xFFFFFFFF, 0, 0xFFFFFFFF, 0]
    assert not transpose_to_bitplanes([0] * 32).planes.any()


def test_transpose_errors():
    with pytest.raises(ContractError):
        transpose_to_bitplanes([1] * 31)
    with pytest.raises(ContractError):
        transpose_to_bitplanes([16] + [0] * 31)
    with pytest.raises(ContractError):
        transpose_to_bitplanes([8] + [0] * 31, signed=True)


def test_bit_layout():
    vals = [0] * 64
    vals[37] = 0b1010
    v = transpose_to_bitplanes(vals)
    assert v.planes[1, 1] == 1 << 5 and v.planes[3, 1] == 1 << 5
    assert v.planes[0].sum() == 0 and v.planes[2].sum() == 0


@given(st.booleans(), st.data())
def test_round_trip(signed, data):
    x, _ = data.draw(vectors(signed))
    v = transpose_to_bitplanes(x, signed)
    assert v.values().tolist() == x
    assert decode(encode(v)).values().tolist() == x


def test_dot_examples():
    ones = transpose_to_bitplanes([1] * 32)
    assert bsdp_dot(ones, ones).outputs == [32]
    f = transpose_to_bitplanes([15] * 32)
    assert bsdp_dot(f, f).outputs == [7200]
    a = transpose_to_bitplanes([-8] * 32, True)
    b = transpose_to_bitplanes([1] * 32, True)
    assert bsdp_dot(a, b).outputs == [-256]


def test_subtracted_pairs():
    assert len(SIGNED_SUBTRACT_PAIRS) == 6
    assert all((j == 3) != (k == 3) for j, k in SIGNED_SUBTRACT_PAIRS)


@settings(deadline=None)
@given(st.booleans(), st.data())
def test_dot_exact_both_engines(signed, data):
    x, y = data.draw(vectors(signed))
    A, B = transpose_to_bitplanes(x, signed), transpose_to_bitplanes(y, signed)
    s = bsdp_dot(A, B, engine="scalar")
    v = bsdp_dot(A, B, engine="vector")
    assert s.outputs == v.outputs == [naive_dot(x, y)]
    assert s.trace.histogram() == v.trace.histogram()


@settings(deadline=None)
@given(st.booleans(), st.data())
def test_bilinear_on_concatenation(signed, data):
    x1, y1 = data.draw(vectors(signed, 2))
    x2, y2 = data.draw(vectors(signed, 2))
    dot = lambda a, b: bsdp_dot(transpose_to_bitplanes(a, signed), transpose_to_bitplanes(b, signed)).outputs[0]
    assert dot(x1 + x2, y1 + y2) == dot(x1, y1) + dot(x2, y2)


@given(st.lists(st.integers(0, 7), min_size=64, max_size=64), st.lists(st.integers(0, 7), min_size=64, max_size=64))
def test_signed_unsigned_agree_on_small_values(x, y):
    u = bsdp_dot(transpose_to_bitplanes(x), transpose_to_bitplanes(y)).outputs[0]
    s = bsdp_dot(transpose_to_bitplanes(x, True), transpose_to_bitplanes(y, True)).outputs[0]
    assert u == s


def test_trace_shape_per_block():
    rng = np.random.default_rng(0)
    x = rng.integers(-8, 7, 32, endpoint=True)
    r = bsdp_dot(transpose_to_bitplanes(x, True), transpose_to_bitplanes(x, True), engine="scalar")
    assert r.trace.count(Opcode.AND) == 16
    assert r.trace.count(Opcode.CAO) == 16
    assert r.trace.count(Opcode.LSL_ADD, Opcode.LSL_SUB) == 16
    assert r.trace.count(Opcode.LOAD64) == BsdpSchedule().loads_per_block


def test_trace_size_affine_and_data_independent():
    rng = np.random.default_rng(1)
    sched = BsdpSchedule()
    sizes = {}
    for nb in (8, 16, 24, 32):
        for signed in (False, True):
            lo, hi = value_range(signed)
            x = rng.integers(lo, hi, 32 * nb, endpoint=True)
            y = rng.integers(lo, hi, 32 * nb, endpoint=True)
            r = bsdp_dot(transpose_to_bitplanes(x, signed), transpose_to_bitplanes(y, signed))
            sizes.setdefault(nb, set()).add(len(r.trace))
            assert len(r.trace) == sched.instructions(nb)
    assert all(len(s) == 1 for s in sizes.values())
    vals = [sizes[nb].pop() for nb in (8, 16, 24, 32)]
    assert vals[1] - vals[0] == vals[2] - vals[1] == vals[3] - vals[2]


def test_register_schedule_is_cheaper():
    x = [3] * 64
    A = transpose_to_bitplanes(x)
    tiled = bsdp_dot(A, A, BsdpSchedule("tiled"), engine="scalar")
    reg = bsdp_dot(A, A, BsdpSchedule("register"), engine="scalar")
    assert tiled.outputs == reg.outputs
    assert len(reg.trace) < len(tiled.trace)


def test_mismatch_errors():
    a = transpose_to_bitplanes([1] * 32)
    with pytest.raises(ContractError):
        bsdp_dot(a, transpose_to_bitplanes([1] * 64))
    with pytest.raises(ContractError):
        bsdp_dot(a, transpose_to_bitplanes([1] * 32, True))
    with pytest.raises(ContractError):
        decode(b"XXXX" + bytes(12))


def test_native_dot_costs():
    assert native_dot_instructions("baseline") == 6
    assert native_dot_instructions("optimized") < native_dot_instructions("baseline")
    assert BsdpSchedule().per_element() < native_dot_instructions("optimized")

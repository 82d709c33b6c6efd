import numpy as np
import pytest
from hypothesis import given, strategies as st

from pimkit.isa import (
    MASK32,
    ContractError,
    Dpu,
    InstructionTrace,
    MemoryConfig,
    Opcode,
    RegisterPair,
    alu_value,
    cao_value,
    check_iram_fit,
    lsl_add_value,
    mul_byte_value,
    mul_step_value,
    s32,
    u32,
)

words = st.integers(0, MASK32)


def test_word_views():
    assert u32(-1) == MASK32
    assert s32(0x80000000) == -(1 << 31)
    assert s32(u32(-5)) == -5
    arr = np.array([-1, 5], dtype=np.int64)
    assert u32(arr).tolist() == [MASK32, 5]
    assert s32(u32(arr)).tolist() == [-1, 5]


def test_byte_multiply_fields():
    assert mul_byte_value(Opcode.MUL_SL_SL, False, 0x12, 0x03) == 0x36
    assert mul_byte_value(Opcode.MUL_SH_SL, False, 0x0000C800, 2) == 400
    assert s32(mul_byte_value(Opcode.MUL_SL_SL, True, 0xFF, 0x02)) == -2
    assert mul_byte_value(Opcode.MUL_SL_SL, False, 0xFF, 0xFF) == 65025


@given(words, words)
def test_byte_multiply_matches_lanes(a, b):
    for op, (fa, fb) in {Opcode.MUL_SL_SL: (0, 0), Opcode.MUL_SH_SL: (8, 0),
                         Opcode.MUL_SL_SH: (0, 8), Opcode.MUL_SH_SH: (8, 8)}.items():
        x, y = (a >> fa) & 0xFF, (b >> fb) & 0xFF
        assert mul_byte_value(op, False, a, b) == x * y
        lanes = mul_byte_value(op, False, np.array([a], np.uint32), np.array([b], np.uint32))
        assert int(lanes[0]) == x * y


@given(words, words, st.integers(0, 31))
def test_lsl_add_wraps(acc, src, shift):
    assert lsl_add_value(acc, src, shift) == (acc + (src << shift)) % (1 << 32)


def test_shift_range_enforced():
    with pytest.raises(ContractError):
        lsl_add_value(0, 1, 32)
    with pytest.raises(ContractError):
        alu_value(Opcode.LSL, 1, -1)


@given(words)
def test_cao_is_popcount(a):
    assert cao_value(a) == bin(a).count("1")
    assert int(cao_value(np.array([a], np.uint32))[0]) == bin(a).count("1")


def test_mul_step_sequence():
    state, mcand = RegisterPair(low=9, high=0), 7
    for shift in range(32):
        state, done = mul_step_value(state, mcand, shift)
        if done:
            break
    assert state.high == 63 and shift == 3


def test_iram_capacity():
    cfg = MemoryConfig()
    assert cfg.iram_capacity_instructions == 4096
    assert check_iram_fit(4096) and not check_iram_fit(4097)
    with pytest.raises(ContractError):
        MemoryConfig(iram_bytes=1000, instruction_size_bytes=6)


def test_dpu_trace_and_memory():
    dpu = Dpu()
    dpu.exec_store(Opcode.STORE32, 8, 0x11223344)
    assert dpu.exec_load(Opcode.LOAD8, 8) == 0x44
    assert dpu.exec_load(Opcode.LOAD32, 8) == 0x11223344
    assert dpu.exec_alu(Opcode.ADD, MASK32, 2) == 1
    assert len(dpu.trace) == 4
    assert dpu.trace.count(Opcode.LOAD8, Opcode.LOAD32) == 2
    with pytest.raises(ContractError):
        dpu.exec_load(Opcode.LOAD32, 2)
    with pytest.raises(ContractError):
        dpu.exec_alu(Opcode.CAO, 1)


def test_trace_histogram():
    t = InstructionTrace()
    t.record(Opcode.AND, 3)
    t.record(Opcode.AND)
    t.record(Opcode.CAO, 2)
    assert t.histogram() == {Opcode.AND: 4, Opcode.CAO: 2}
    with pytest.raises(ContractError):
        t.record(Opcode.AND, -1)

"""DPU machine words, the instruction subset used by the kernels, and a traced core.

Words are plain Python ints kept in ``[0, 2**32)``. The pure ``*_value``
helpers also accept ``numpy.uint32`` arrays so the batch kernels can run the
same instruction semantics lane-wise.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF
INT32_MIN = -(1 << 31)
INT32_MAX = (1 << 31) - 1


class ContractError(ValueError):
    """An operation was called outside its precondition."""


class Opcode(enum.Enum):
    ADD = "add"
    SUB = "sub"
    AND = "and"
    XOR = "xor"
    LSL = "lsl"
    LSR = "lsr"
    LSL_ADD = "lsl_add"
    LSL_SUB = "lsl_sub"
    CAO = "cao"
    MUL_SL_SL = "mul_sl_sl"
    MUL_SH_SL = "mul_sh_sl"
    MUL_SL_SH = "mul_sl_sh"
    MUL_SH_SH = "mul_sh_sh"
    MUL_STEP = "mul_step"
    MOVE = "move"
    LOAD8 = "lbu"
    LOAD32 = "lw"
    LOAD64 = "ld"
    STORE8 = "sb"
    STORE32 = "sw"
    STORE64 = "sd"
    JUMP = "jump"
    COND_JUMP = "cond_jump"


ALU_OPS = (Opcode.ADD, Opcode.SUB, Opcode.AND, Opcode.XOR, Opcode.LSL, Opcode.LSR, Opcode.MOVE)
BYTE_MULS = (Opcode.MUL_SL_SL, Opcode.MUL_SH_SL, Opcode.MUL_SL_SH, Opcode.MUL_SH_SH)
LOADS = {Opcode.LOAD8: 1, Opcode.LOAD32: 4, Opcode.LOAD64: 8}
STORES = {Opcode.STORE8: 1, Opcode.STORE32: 4, Opcode.STORE64: 8}


def u32(x):
    """Reinterpret as an unsigned 32-bit word."""
    if isinstance(x, np.ndarray):
        return x.astype(np.int64).astype(np.uint32) if x.dtype.kind == "i" else x.astype(np.uint32)
    return x & MASK32


def s32(x):
    """Reinterpret a 32-bit word as signed."""
    if isinstance(x, np.ndarray):
        return u32(x).view(np.int32)
    x &= MASK32
    return x - (1 << 32) if x & 0x80000000 else x


def s8(x):
    if isinstance(x, np.ndarray):
        return (x & 0xFF).astype(np.uint8).view(np.int8).astype(np.int32)
    x &= 0xFF
    return x - 0x100 if x & 0x80 else x


def _check_shift(shift) -> None:
    if not 0 <= int(shift) <= 31:
        raise ContractError(f"shift amount {shift} outside [0, 31]")


# -- pure semantics --------------------------------------------------------

def alu_value(op: Opcode, a, b=0):
    if op is Opcode.ADD:
        return u32(a + b) if not isinstance(a, np.ndarray) else (a + u32(b)).astype(np.uint32)
    if op is Opcode.SUB:
        return u32(a - b) if not isinstance(a, np.ndarray) else (a - u32(b)).astype(np.uint32)
    if op is Opcode.AND:
        return a & b
    if op is Opcode.XOR:
        return a ^ b
    if op is Opcode.LSL:
        _check_shift(b)
        return u32(a << b) if not isinstance(a, np.ndarray) else (a << np.uint32(b)).astype(np.uint32)
    if op is Opcode.LSR:
        _check_shift(b)
        return a >> b if not isinstance(a, np.ndarray) else a >> np.uint32(b)
    if op is Opcode.MOVE:
        return a
    raise ContractError(f"{op} is not an ALU opcode")


def lsl_add_value(acc, src, shift):
    _check_shift(shift)
    if isinstance(acc, np.ndarray) or isinstance(src, np.ndarray):
        return (np.asarray(acc, np.uint32) + (np.asarray(src, np.uint32) << np.uint32(shift))).astype(np.uint32)
    return (acc + (src << shift)) & MASK32


def lsl_sub_value(acc, src, shift):
    _check_shift(shift)
    if isinstance(acc, np.ndarray) or isinstance(src, np.ndarray):
        return (np.asarray(acc, np.uint32) - (np.asarray(src, np.uint32) << np.uint32(shift))).astype(np.uint32)
    return (acc - (src << shift)) & MASK32


def cao_value(a):
    if isinstance(a, np.ndarray):
        return np.bitwise_count(a.astype(np.uint32)).astype(np.uint32)
    return (a & MASK32).bit_count()


# SL selects bits 0..7, SH bits 8..15: one 16-bit shift then exposes bytes 2 and 3.
_FIELD_SHIFT = {"SL": 0, "SH": 8}
_VARIANTS = {
    Opcode.MUL_SL_SL: ("SL", "SL"),
    Opcode.MUL_SH_SL: ("SH", "SL"),
    Opcode.MUL_SL_SH: ("SL", "SH"),
    Opcode.MUL_SH_SH: ("SH", "SH"),
}


def byte_field(x, which: str):
    return (x >> _FIELD_SHIFT[which]) & 0xFF


def mul_byte_value(variant: Opcode, signed: bool, a, b):
    fa, fb = _VARIANTS[variant]
    x, y = byte_field(a, fa), byte_field(b, fb)
    if isinstance(x, np.ndarray) or isinstance(y, np.ndarray):
        x = np.asarray(x).astype(np.int64)
        y = np.asarray(y).astype(np.int64)
        if signed:
            x = np.where(x >= 128, x - 256, x)
            y = np.where(y >= 128, y - 256, y)
        return (x * y).astype(np.uint32)
    if signed:
        x, y = s8(x), s8(y)
    return u32(x * y)


@dataclass(frozen=True)
class RegisterPair:
    """A 64-bit register pair ``d0 = (r0, r1)``; MUL_STEP keeps the multiplier in
    ``low`` and the accumulator in ``high``."""

    low: int = 0
    high: int = 0

    @property
    def value(self) -> int:
        return (self.high << 32) | self.low


def mul_step_value(state: RegisterPair, multiplicand: int, shift: int) -> tuple[RegisterPair, bool]:
    # order: test LSB, conditional accumulate, shift multiplier, test zero
    _check_shift(shift)
    high = state.high
    if state.low & 1:
        high = (high + (multiplicand << shift)) & MASK32
    low = state.low >> 1
    return RegisterPair(low, high), low == 0


@dataclass(frozen=True)
class MemoryConfig:
    mram_bytes: int = 64 << 20
    wram_bytes: int = 64 << 10
    iram_bytes: int = 24 << 10
    instruction_size_bytes: int = 6

    def __post_init__(self):
        if self.instruction_size_bytes <= 0 or self.iram_bytes % self.instruction_size_bytes:
            raise ContractError("IRAM size must hold a whole number of instructions")

    @property
    def iram_capacity_instructions(self) -> int:
        return self.iram_bytes // self.instruction_size_bytes


def check_iram_fit(instruction_count: int, cfg: MemoryConfig = MemoryConfig()) -> bool:
    if instruction_count < 0:
        raise ContractError("instruction count must be non-negative")
    return instruction_count <= cfg.iram_capacity_instructions


# -- trace -----------------------------------------------------------------

@dataclass
class InstructionTrace:
    """Ordered record of issued instructions as ``(opcode, count)`` entries."""

    entries: list = field(default_factory=list)
    total_instructions: int = 0

    def record(self, op: Opcode, count: int = 1) -> None:
        if count < 0:
            raise ContractError("negative instruction count")
        self.entries.append((op, count))
        self.total_instructions += count

    def extend(self, other: "InstructionTrace") -> None:
        self.entries.extend(other.entries)
        self.total_instructions += other.total_instructions

    def count(self, *ops: Opcode) -> int:
        wanted = set(ops)
        return sum(n for op, n in self.entries if op in wanted)

    def histogram(self) -> dict:
        out: dict = {}
        for op, n in self.entries:
            out[op] = out.get(op, 0) + n
        return out

    def __len__(self) -> int:
        return self.total_instructions


class Dpu:
    """One DPU core: named registers, a flat WRAM byte array, and a trace.

    Every ``exec_*`` call issues exactly one instruction and appends one trace
    entry. Conditional jumps fused into an ALU instruction (as in
    ``mul_step ..., z, label``) are part of that instruction's slot.
    """

    def __init__(self, memory: MemoryConfig = MemoryConfig(), with_mram: bool = False):
        self.memory = memory
        self.regs: dict[str, int] = {"zero": 0}
        self.wram = bytearray(memory.wram_bytes)
        self.mram = bytearray(memory.mram_bytes) if with_mram else None
        self.trace = InstructionTrace()

    def exec_alu(self, op: Opcode, a: int, b: int = 0) -> int:
        if op not in ALU_OPS:
            raise ContractError(f"{op} is not an ALU opcode")
        out = alu_value(op, a & MASK32, b & MASK32 if op not in (Opcode.LSL, Opcode.LSR) else b)
        self.trace.record(op)
        return out

    def exec_lsl_add(self, acc: int, src: int, shift: int) -> int:
        out = lsl_add_value(acc & MASK32, src & MASK32, shift)
        self.trace.record(Opcode.LSL_ADD)
        return out

    def exec_lsl_sub(self, acc: int, src: int, shift: int) -> int:
        out = lsl_sub_value(acc & MASK32, src & MASK32, shift)
        self.trace.record(Opcode.LSL_SUB)
        return out

    def exec_cao(self, a: int) -> int:
        self.trace.record(Opcode.CAO)
        return cao_value(a)

    def exec_mul_byte(self, variant: Opcode, signed: bool, a: int, b: int) -> int:
        if variant not in BYTE_MULS:
            raise ContractError(f"{variant} is not a byte multiply")
        self.trace.record(variant)
        return mul_byte_value(variant, signed, a & MASK32, b & MASK32)

    def exec_mul_step(self, state: RegisterPair, multiplicand: int, shift: int) -> tuple[RegisterPair, bool]:
        out = mul_step_value(state, multiplicand & MASK32, shift)
        self.trace.record(Opcode.MUL_STEP)
        return out

    def exec_jump(self) -> None:
        self.trace.record(Opcode.JUMP)

    def exec_cond_jump(self, taken: bool) -> bool:
        self.trace.record(Opcode.COND_JUMP)
        return bool(taken)

    def exec_load(self, op: Opcode, addr: int) -> int:
        width = LOADS[op]
        self._check_addr(addr, width)
        self.trace.record(op)
        return int.from_bytes(self.wram[addr:addr + width], "little")

    def exec_store(self, op: Opcode, addr: int, value: int) -> None:
        width = STORES[op]
        self._check_addr(addr, width)
        self.trace.record(op)
        self.wram[addr:addr + width] = (value & ((1 << (8 * width)) - 1)).to_bytes(width, "little")

    def _check_addr(self, addr: int, width: int) -> None:
        if addr < 0 or addr + width > len(self.wram) or addr % width:
            raise ContractError(f"bad WRAM access at {addr:#x} width {width}")

"""Integer multiply routines and the arithmetic update microkernel.

Each scalar kernel drives a :class:`~pimkit.isa.Dpu` and returns its outputs
with the instruction trace. The ``*_batch`` variants run the same instruction
schedule lane-wise over numpy arrays for large randomized checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .isa import (
    MASK32,
    MASK64,
    ContractError,
    Dpu,
    InstructionTrace,
    MemoryConfig,
    Opcode,
    RegisterPair,
    alu_value,
    check_iram_fit,
    lsl_add_value,
    mul_byte_value,
    s8,
    u32,
)

BLOCK_SIZE = 1024
MULSI3_CODE_SIZE = 4 + 32 + 2  # setup, 32 unrolled steps, result move + return


class IramOverflowError(RuntimeError):
    """Unrolled code does not fit in IRAM; the real toolchain fails at link time."""


@dataclass
class KernelResult:
    outputs: list
    trace: InstructionTrace


@dataclass(frozen=True)
class ByteDecomposition:
    x0: int
    x1: int
    x2: int
    x3: int
    source_sign: int

    def recompose(self) -> int:
        return self.x0 | self.x1 << 8 | self.x2 << 16 | self.x3 << 24


# -- __mulsi3 --------------------------------------------------------------

def _mulsi3_on(dpu: Dpu, a: int, b: int) -> int:
    a, b = a & MASK32, b & MASK32
    # jgtu: the smaller unsigned operand becomes the multiplier in r0
    if dpu.exec_cond_jump(a < b):
        a, b = b, a
    multiplicand = dpu.exec_alu(Opcode.MOVE, a)
    multiplier = dpu.exec_alu(Opcode.MOVE, b)
    acc = dpu.exec_alu(Opcode.MOVE, 0)
    state = RegisterPair(multiplier, acc)
    for shift in range(32):
        state, exited = dpu.exec_mul_step(state, multiplicand, shift)
        if exited:
            break
    out = dpu.exec_alu(Opcode.MOVE, state.high)
    dpu.exec_jump()  # return
    return out


def mulsi3(a: int, b: int, dpu: Dpu | None = None) -> KernelResult:
    """Shift-and-add 32-bit multiply built from chained MUL_STEP instructions."""
    dpu = dpu or Dpu()
    start = len(dpu.trace.entries)
    out = _mulsi3_on(dpu, a, b)
    trace = InstructionTrace()
    for op, n in dpu.trace.entries[start:]:
        trace.record(op, n)
    return KernelResult([out], trace)


def mulsi3_steps(a: int, b: int) -> int:
    """Number of MUL_STEP instructions ``mulsi3`` issues for these operands."""
    m = min(a & MASK32, b & MASK32)
    return max(1, m.bit_length())


def mulsi3_batch(a, b):
    """Lane-wise ``mulsi3``; returns ``(products, mul_step_counts)``."""
    a = u32(np.asarray(a))
    b = u32(np.asarray(b))
    swap = a < b
    mcand = np.where(swap, b, a).astype(np.uint32)
    low = np.where(swap, a, b).astype(np.uint32)
    high = np.zeros_like(low)
    steps = np.zeros(low.shape, np.int64)
    live = np.ones(low.shape, bool)
    for shift in range(32):
        if not live.any():
            break
        steps += live
        add = live & ((low & 1) == 1)
        high = np.where(add, lsl_add_value(high, mcand, shift), high)
        low = np.where(live, low >> np.uint32(1), low)
        live &= low != 0
    return high, steps


# -- native INT8 -----------------------------------------------------------

def mul_int8_native(a: int, b: int, dpu: Dpu | None = None) -> KernelResult:
    """Signed INT8 multiply with one MUL_SL_SL; result is the sign-extended 16-bit product."""
    if not (-128 <= a <= 127 and -128 <= b <= 127):
        raise ContractError("operands must be signed bytes")
    dpu = dpu or Dpu()
    trace_start = len(dpu.trace.entries)
    out = dpu.exec_mul_byte(Opcode.MUL_SL_SL, True, a & 0xFF, b & 0xFF)
    trace = InstructionTrace()
    for op, n in dpu.trace.entries[trace_start:]:
        trace.record(op, n)
    return KernelResult([out], trace)


def _blocked_group(dpu: Dpu, word: int, scalar: int, addr: int) -> None:
    # two bytes, a 16-bit shift, two more bytes
    for k in range(2):
        lo = dpu.exec_mul_byte(Opcode.MUL_SL_SL, True, word, scalar)
        dpu.exec_store(Opcode.STORE8, addr + 2 * k, lo)
        hi = dpu.exec_mul_byte(Opcode.MUL_SH_SL, True, word, scalar)
        dpu.exec_store(Opcode.STORE8, addr + 2 * k + 1, hi)
        if k == 0:
            word = dpu.exec_alu(Opcode.LSR, word, 16)


def _blocked_on(dpu: Dpu, addr: int, scalar: int, width: int) -> None:
    s = scalar & 0xFF
    if width == 8:
        d = dpu.exec_load(Opcode.LOAD64, addr)
        _blocked_group(dpu, d & MASK32, s, addr)
        _blocked_group(dpu, d >> 32, s, addr + 4)
    elif width == 4:
        for half in range(2):
            w = dpu.exec_load(Opcode.LOAD32, addr + 4 * half)
            _blocked_group(dpu, w, s, addr + 4 * half)
    else:
        raise ContractError("block width must be 4 or 8")


def mul_int8_blocked(block: int, scalar: int, width: int = 8, dpu: Dpu | None = None) -> KernelResult:
    """Multiply eight packed INT8 values by a scalar, loading 32 or 64 bits at a time.

    Each output byte is the product truncated to 8 bits. ``outputs`` holds the
    packed 64-bit result.
    """
    if not -128 <= scalar <= 255:
        raise ContractError("scalar must fit in a byte")
    dpu = dpu or Dpu()
    start = len(dpu.trace.entries)
    dpu.wram[0:8] = (block & MASK64).to_bytes(8, "little")
    _blocked_on(dpu, 0, scalar, width)
    out = int.from_bytes(dpu.wram[0:8], "little")
    trace = InstructionTrace()
    for op, n in dpu.trace.entries[start:]:
        trace.record(op, n)
    return KernelResult([out], trace)


def mul_int8_blocked_batch(blocks, scalars):
    """Lane-wise blocked multiply over uint64 blocks; returns packed uint64 results."""
    blocks = np.asarray(blocks, np.uint64)
    s = np.asarray(scalars).astype(np.int64) & 0xFF
    out = np.zeros_like(blocks)
    for half in range(2):
        word = ((blocks >> np.uint64(32 * half)) & np.uint64(MASK32)).astype(np.uint32)
        for k in range(2):
            for j, variant in enumerate((Opcode.MUL_SL_SL, Opcode.MUL_SH_SL)):
                prod = mul_byte_value(variant, True, word, s.astype(np.uint32)).astype(np.uint64) & np.uint64(0xFF)
                out |= prod << np.uint64(8 * (4 * half + 2 * k + j))
            word = word >> np.uint32(16)
    return out


# -- decomposed INT32 multiply ----------------------------------------------

def decompose_abs(v: int) -> ByteDecomposition:
    v &= MASK32
    sign = v >> 31
    mag = (-v) & MASK32 if sign else v
    return ByteDecomposition(mag & 0xFF, (mag >> 8) & 0xFF, (mag >> 16) & 0xFF, mag >> 24, sign)


# (shift, a-operand, a-field, b-operand, b-field); "lo" is |x|, "hi" is |x| >> 16
_DIM_TERMS = (
    (0, "lo", "SL", "lo", "SL"),
    (8, "lo", "SL", "lo", "SH"),
    (8, "lo", "SH", "lo", "SL"),
    (16, "lo", "SL", "hi", "SL"),
    (16, "lo", "SH", "lo", "SH"),
    (16, "hi", "SL", "lo", "SL"),
    (24, "lo", "SL", "hi", "SH"),
    (24, "lo", "SH", "hi", "SL"),
    (24, "hi", "SL", "lo", "SH"),
    (24, "hi", "SH", "lo", "SL"),
)
_MUL_FOR = {
    ("SL", "SL"): Opcode.MUL_SL_SL,
    ("SH", "SL"): Opcode.MUL_SH_SL,
    ("SL", "SH"): Opcode.MUL_SL_SH,
    ("SH", "SH"): Opcode.MUL_SH_SH,
}
DIM_MAX_INSTRUCTIONS = 25


def _dim_on(dpu: Dpu, a: int, b: int) -> int:
    a, b = a & MASK32, b & MASK32
    sign = dpu.exec_alu(Opcode.XOR, a, b) >> 31
    # sub with a fused "result <= 0" jump keeps the original register on that path,
    # so each absolute value costs one slot
    na = dpu.exec_alu(Opcode.SUB, 0, a)
    abs_a = na if a >> 31 else a
    nb = dpu.exec_alu(Opcode.SUB, 0, b)
    abs_b = nb if b >> 31 else b
    ops = {
        ("a", "lo"): abs_a,
        ("b", "lo"): abs_b,
        ("a", "hi"): dpu.exec_alu(Opcode.LSR, abs_a, 16),
        ("b", "hi"): dpu.exec_alu(Opcode.LSR, abs_b, 16),
    }
    acc = None
    for shift, xa, fa, yb, fb in _DIM_TERMS:
        p = dpu.exec_mul_byte(_MUL_FOR[fa, fb], False, ops["a", xa], ops["b", yb])
        acc = p if acc is None else dpu.exec_lsl_add(acc, p, shift)
    if sign:
        acc = dpu.exec_alu(Opcode.SUB, 0, acc)
    return acc


def dim_mul_int32(a: int, b: int, dpu: Dpu | None = None) -> KernelResult:
    """32-bit multiply from ten unsigned byte products of the operands' magnitudes."""
    dpu = dpu or Dpu()
    start = len(dpu.trace.entries)
    out = _dim_on(dpu, a, b)
    trace = InstructionTrace()
    for op, n in dpu.trace.entries[start:]:
        trace.record(op, n)
    return KernelResult([out], trace)


def dim_batch(a, b):
    """Lane-wise DIM; returns ``(products, instruction_counts)``."""
    a = u32(np.asarray(a))
    b = u32(np.asarray(b))
    sign = alu_value(Opcode.XOR, a, b) >> np.uint32(31)
    abs_a = np.where(a >> np.uint32(31) == 1, alu_value(Opcode.SUB, np.zeros_like(a), a), a).astype(np.uint32)
    abs_b = np.where(b >> np.uint32(31) == 1, alu_value(Opcode.SUB, np.zeros_like(b), b), b).astype(np.uint32)
    ops = {
        ("a", "lo"): abs_a,
        ("b", "lo"): abs_b,
        ("a", "hi"): abs_a >> np.uint32(16),
        ("b", "hi"): abs_b >> np.uint32(16),
    }
    acc = None
    for shift, xa, fa, yb, fb in _DIM_TERMS:
        p = mul_byte_value(_MUL_FOR[fa, fb], False, ops["a", xa], ops["b", yb])
        acc = p if acc is None else lsl_add_value(acc, p, shift)
    neg = alu_value(Opcode.SUB, np.zeros_like(acc), acc)
    out = np.where(sign == 1, neg, acc).astype(np.uint32)
    counts = 24 + sign.astype(np.int64)
    return out, counts


# -- update microkernel ----------------------------------------------------

DTYPES = {"INT8": 1, "INT32": 4}
VARIANTS = {
    ("ADD", "INT8"): ("baseline",),
    ("ADD", "INT32"): ("baseline",),
    ("MUL", "INT8"): ("baseline", "NI", "NIx4", "NIx8"),
    ("MUL", "INT32"): ("baseline", "DIM"),
}
ELEMENTS_PER_ITERATION = {"NIx4": 4, "NIx8": 8}
# static code size of one loop iteration body, for the IRAM fit check
BODY_CODE_SIZE = {
    ("ADD", "baseline"): 3,
    ("MUL", "baseline"): 3,
    ("MUL", "NI"): 3,
    ("MUL", "NIx4"): 10,
    ("MUL", "NIx8"): 19,
    ("MUL", "DIM"): 2 + DIM_MAX_INSTRUCTIONS,
}


@dataclass(frozen=True)
class LoopModel:
    """Loop-control cost: ``control_overhead`` instructions per rolled iteration.

    Loops whose index advances by more than one byte pay ``wide_stride_extra``
    for the separate address update. ``unroll`` is 1, a fixed factor, or
    ``"full"``/``"auto"`` (one copy per iteration of the block).
    """

    control_overhead: int = 2
    wide_stride_extra: int = 1
    unroll: int | str = 1

    def overhead_for(self, stride_bytes: int) -> int:
        return self.control_overhead + (self.wide_stride_extra if stride_bytes > 1 else 0)

    def factor(self, iterations: int) -> int:
        if self.unroll in ("full", "auto"):
            return iterations
        u = int(self.unroll)
        if u < 1:
            raise ContractError("unroll factor must be positive")
        return min(u, iterations)


def _validate(op: str, dtype: str, variant: str) -> None:
    if (op, dtype) not in VARIANTS:
        raise ContractError(f"unsupported op/dtype {op}/{dtype}")
    if variant not in VARIANTS[op, dtype]:
        raise ContractError(f"variant {variant} not available for {dtype} {op}")


def iteration_shape(op: str, dtype: str, variant: str) -> tuple[int, int]:
    """``(elements per loop iteration, stride in bytes)``."""
    n = ELEMENTS_PER_ITERATION.get(variant, 1)
    return n, n * DTYPES[dtype]


def unrolled_code_size(op: str, dtype: str, variant: str, loop: LoopModel) -> int:
    per_iter, stride = iteration_shape(op, dtype, variant)
    iterations = BLOCK_SIZE // stride
    size = loop.factor(iterations) * BODY_CODE_SIZE[op, variant] + loop.overhead_for(stride)
    if variant == "baseline" and op == "MUL":
        size += MULSI3_CODE_SIZE
    return size


def _element_on(dpu: Dpu, op: str, dtype: str, variant: str, addr: int, scalar: int) -> None:
    width = DTYPES[dtype]
    load = Opcode.LOAD8 if width == 1 else Opcode.LOAD32
    store = Opcode.STORE8 if width == 1 else Opcode.STORE32
    if variant == "NIx8":
        _blocked_on(dpu, addr, scalar, 8)
        return
    if variant == "NIx4":
        _nix4_on(dpu, addr, scalar)
        return
    x = dpu.exec_load(load, addr)
    s = scalar & (0xFF if width == 1 else MASK32)
    if op == "ADD":
        y = dpu.exec_alu(Opcode.ADD, x, s)
    elif variant == "NI":
        y = dpu.exec_mul_byte(Opcode.MUL_SL_SL, True, x, s)
    elif variant == "DIM":
        y = _dim_on(dpu, x, s)
    else:
        dpu.exec_jump()  # call __mulsi3
        y = _mulsi3_on(dpu, x, s)
    dpu.exec_store(store, addr, y)


def _nix4_on(dpu: Dpu, addr: int, scalar: int) -> None:
    w = dpu.exec_load(Opcode.LOAD32, addr)
    _blocked_group(dpu, w, scalar & 0xFF, addr)


def _control_on(dpu: Dpu, overhead: int) -> None:
    for _ in range(overhead - 1):
        dpu.exec_alu(Opcode.ADD, 0, 1)
    dpu.exec_cond_jump(True)


def update_microkernel(
    buffer,
    scalar: int,
    op: str = "ADD",
    dtype: str = "INT8",
    variant: str = "baseline",
    unroll: int | str = 1,
    loop: LoopModel | None = None,
    memory: MemoryConfig = MemoryConfig(),
) -> KernelResult:
    """Apply ``buffer[i] += scalar`` or ``buffer[i] *= scalar`` block by block.

    ``buffer`` is a sequence of signed integers of ``dtype``; its byte size
    must be a multiple of the iteration stride. Outputs are signed values
    wrapped to the dtype width.

    Raises :class:`IramOverflowError` if the unrolled loop does not fit in IRAM.
    """
    _validate(op, dtype, variant)
    loop = loop or LoopModel(unroll=unroll)
    per_iter, stride = iteration_shape(op, dtype, variant)
    width = DTYPES[dtype]
    np_dtype = np.int8 if width == 1 else np.int32
    data = np.asarray(buffer, dtype=np.int64)
    if data.size * width % stride:
        raise ContractError(f"buffer of {data.size} {dtype} values is not a multiple of {stride} bytes")
    code = unrolled_code_size(op, dtype, variant, loop)
    if not check_iram_fit(code, memory):
        raise IramOverflowError(
            f"does not link: {code} instructions exceed IRAM capacity of {memory.iram_capacity_instructions}"
        )
    raw = data.astype(np_dtype).tobytes()
    dpu = Dpu(memory)
    out = bytearray(len(raw))
    overhead = loop.overhead_for(stride)
    for block_start in range(0, len(raw), BLOCK_SIZE):
        chunk = raw[block_start:block_start + BLOCK_SIZE]
        dpu.wram[0:len(chunk)] = chunk  # MRAM -> WRAM staging is not timed
        iterations = len(chunk) // stride
        u = loop.factor(iterations)
        for it in range(iterations):
            _element_on(dpu, op, dtype, variant, it * stride, scalar)
            if (it + 1) % u == 0 or it + 1 == iterations:
                _control_on(dpu, overhead)
        out[block_start:block_start + len(chunk)] = dpu.wram[0:len(chunk)]
    values = np.frombuffer(bytes(out), dtype=np_dtype).astype(np.int64).tolist()
    return KernelResult(values, dpu.trace)


def native_update(buffer, scalar: int, op: str, dtype: str) -> np.ndarray:
    """Element-wise wrapped reference result."""
    data = np.asarray(buffer, dtype=np.int64)
    res = data + scalar if op == "ADD" else data * scalar
    bits = 8 * DTYPES[dtype]
    res = res & ((1 << bits) - 1)
    return np.where(res >= 1 << (bits - 1), res - (1 << bits), res)


def per_element_instructions(
    op: str, dtype: str, variant: str, unroll: int | str = 1, mul_steps: float | None = None,
    dim_negations: float = 0.5, loop: LoopModel | None = None,
) -> float:
    """Closed-form per-element instruction count of ``update_microkernel``.

    ``mul_steps`` is the mean MUL_STEP count per baseline multiply and
    ``dim_negations`` the fraction of DIM products that need a final negation.
    """
    _validate(op, dtype, variant)
    loop = loop or LoopModel(unroll=unroll)
    per_iter, stride = iteration_shape(op, dtype, variant)
    iterations = BLOCK_SIZE // stride
    control = loop.overhead_for(stride) * math.ceil(iterations / loop.factor(iterations)) / iterations
    if op == "ADD" or variant == "NI":
        body = 3.0
    elif variant == "NIx4":
        body = 10.0
    elif variant == "NIx8":
        body = 19.0
    elif variant == "DIM":
        body = 2 + 24 + dim_negations
    else:
        if mul_steps is None:
            mul_steps = 8 if dtype == "INT8" else 32
        body = 3 + 6 + mul_steps
    return (body + control) / per_iter


def int8_byte_view(x: int) -> int:
    """The zero-extended register value a byte load leaves for a signed byte."""
    return x & 0xFF


__all__ = [
    "BLOCK_SIZE",
    "ByteDecomposition",
    "IramOverflowError",
    "KernelResult",
    "LoopModel",
    "decompose_abs",
    "dim_batch",
    "dim_mul_int32",
    "int8_byte_view",
    "mul_int8_blocked",
    "mul_int8_blocked_batch",
    "mul_int8_native",
    "mulsi3",
    "mulsi3_batch",
    "mulsi3_steps",
    "native_update",
    "per_element_instructions",
    "s8",
    "update_microkernel",
]

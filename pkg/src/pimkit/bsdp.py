"""Bit-plane vectors and the bit-serial 4-bit dot product.

A vector of N four-bit values (N a multiple of 32) is stored as four bit
planes. Plane ``j`` holds bit ``j`` of every element, 32 elements per word,
element ``32*w + t`` in bit ``t``. In memory the planes are interleaved per
block of 32 elements: ``p0[w], p1[w], p2[w], p3[w]``.

The dot product pairs every plane of A with every plane of B:
``sum_jk 2**(j+k) * popcount(A_j & B_k)``. For signed vectors the top plane
has weight -8, so the 6 pairs where exactly one index is 3 are subtracted.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .isa import MASK32, ContractError, Dpu, InstructionTrace, MemoryConfig, Opcode, s32
from .kernels import KernelResult

PLANES = 4
BLOCK_ELEMENTS = 32
BLOCK_BYTES = PLANES * 4
PAIRS = [(j, k) for j in range(PLANES) for k in range(PLANES)]
# largest N for which the unsigned 32-bit accumulator cannot wrap
EXACT_MAX_ELEMENTS = (2**31 - 1) // 225

FILE_MAGIC = b"BSDP"
_HEADER = struct.Struct("<4sQB3x")


def _subtracted(j: int, k: int) -> bool:
    return (j == 3) != (k == 3)


SIGNED_SUBTRACT_PAIRS = tuple(p for p in PAIRS if _subtracted(*p))


@dataclass(frozen=True)
class BitPlaneVector:
    planes: np.ndarray  # uint32, shape (4, N // 32)
    length: int
    signed: bool = False

    def __post_init__(self):
        if self.planes.shape != (PLANES, self.length // BLOCK_ELEMENTS) or self.length % BLOCK_ELEMENTS:
            raise ContractError("plane shape does not match element count")
        self.planes.setflags(write=False)

    @property
    def blocks(self) -> int:
        return self.length // BLOCK_ELEMENTS

    def interleaved(self) -> np.ndarray:
        """Words in memory order, shape ``(blocks, 4)``."""
        return np.ascontiguousarray(self.planes.T)

    def values(self) -> np.ndarray:
        """Reconstruct the element values."""
        as_bytes = self.planes.astype("<u4").view(np.uint8).reshape(PLANES, -1)
        bits = np.unpackbits(as_bytes, axis=1, bitorder="little").astype(np.int64)
        weights = np.array([1, 2, 4, -8 if self.signed else 8], dtype=np.int64)
        return weights @ bits


def value_range(signed: bool) -> tuple[int, int]:
    return (-8, 7) if signed else (0, 15)


def transpose_to_bitplanes(values, signed: bool = False) -> BitPlaneVector:
    v = np.asarray(values, dtype=np.int64)
    if v.ndim != 1 or v.size == 0 or v.size % BLOCK_ELEMENTS:
        raise ContractError(f"length must be a positive multiple of {BLOCK_ELEMENTS}, got {v.size}")
    lo, hi = value_range(signed)
    if v.min() < lo or v.max() > hi:
        raise ContractError(f"values outside [{lo}, {hi}]")
    nib = (v & 0xF).astype(np.uint8)
    planes = np.empty((PLANES, v.size // BLOCK_ELEMENTS), dtype=np.uint32)
    for j in range(PLANES):
        packed = np.packbits((nib >> j) & 1, bitorder="little")
        planes[j] = packed.view("<u4")
    return BitPlaneVector(planes, int(v.size), bool(signed))


# -- schedule --------------------------------------------------------------

@dataclass(frozen=True)
class BsdpSchedule:
    """Instruction schedule of the unrolled block loop.

    ``loads_per_block`` is the number of LOAD64 per 32-element block. The
    default ``"tiled"`` schedule reloads an A plane pair and a B plane pair
    for each (j, k-pair) tile, 16 loads per block; ``"register"`` keeps all
    eight words of a block in registers (4 loads).
    """

    kind: str = "tiled"
    blocks_per_iteration: int = 8
    control_overhead: int = 3

    def __post_init__(self):
        if self.kind not in ("tiled", "register"):
            raise ContractError(f"unknown schedule {self.kind!r}")
        if self.blocks_per_iteration < 1 or self.control_overhead < 1:
            raise ContractError("bad loop shape")

    @property
    def loads_per_block(self) -> int:
        return 16 if self.kind == "tiled" else 4

    def instructions(self, blocks: int) -> int:
        iterations = -(-blocks // self.blocks_per_iteration)
        return blocks * (self.loads_per_block + 3 * len(PAIRS)) + iterations * self.control_overhead

    def per_element(self) -> float:
        """Instructions per element in the steady state."""
        per_block = self.loads_per_block + 3 * len(PAIRS) + self.control_overhead / self.blocks_per_iteration
        return per_block / BLOCK_ELEMENTS


def _check_pair(a: BitPlaneVector, b: BitPlaneVector) -> None:
    if a.length != b.length:
        raise ContractError(f"length mismatch: {a.length} vs {b.length}")
    if a.signed != b.signed:
        raise ContractError("signedness mismatch")


def _finish(acc: int, signed: bool) -> int:
    return s32(acc) if signed else acc & MASK32


def _dot_vector(a: BitPlaneVector, b: BitPlaneVector, schedule: BsdpSchedule) -> KernelResult:
    acc = 0
    for j, k in PAIRS:
        pop = int(np.bitwise_count(a.planes[j] & b.planes[k]).sum())
        term = pop << (j + k)
        acc = acc - term if a.signed and _subtracted(j, k) else acc + term
    nb = a.blocks
    trace = InstructionTrace()
    trace.record(Opcode.LOAD64, nb * schedule.loads_per_block)
    trace.record(Opcode.AND, nb * len(PAIRS))
    trace.record(Opcode.CAO, nb * len(PAIRS))
    n_sub = len(SIGNED_SUBTRACT_PAIRS) if a.signed else 0
    trace.record(Opcode.LSL_ADD, nb * (len(PAIRS) - n_sub))
    if n_sub:
        trace.record(Opcode.LSL_SUB, nb * n_sub)
    control = schedule.instructions(nb) - nb * (schedule.loads_per_block + 3 * len(PAIRS))
    iterations = -(-nb // schedule.blocks_per_iteration)
    trace.record(Opcode.ADD, control - iterations)
    trace.record(Opcode.COND_JUMP, iterations)
    return KernelResult([_finish(acc, a.signed)], trace)


def _dot_scalar(a: BitPlaneVector, b: BitPlaneVector, schedule: BsdpSchedule) -> KernelResult:
    dpu = Dpu(MemoryConfig())
    chunk_blocks = len(dpu.wram) // (2 * BLOCK_BYTES)
    wa, wb = a.interleaved(), b.interleaved()
    acc = 0
    done = 0
    for start in range(0, a.blocks, chunk_blocks):
        stop = min(start + chunk_blocks, a.blocks)
        n = stop - start
        # staging from MRAM is outside the timed loop
        dpu.wram[0:n * BLOCK_BYTES] = wa[start:stop].astype("<u4").tobytes()
        base_b = n * BLOCK_BYTES
        dpu.wram[base_b:base_b + n * BLOCK_BYTES] = wb[start:stop].astype("<u4").tobytes()
        for i in range(n):
            pa, pb = i * BLOCK_BYTES, base_b + i * BLOCK_BYTES
            if schedule.kind == "register":
                xs = [dpu.exec_load(Opcode.LOAD64, pa), dpu.exec_load(Opcode.LOAD64, pa + 8)]
                ys = [dpu.exec_load(Opcode.LOAD64, pb), dpu.exec_load(Opcode.LOAD64, pb + 8)]
            for j in range(PLANES):
                for kp in range(2):
                    if schedule.kind == "tiled":
                        x = dpu.exec_load(Opcode.LOAD64, pa + 8 * (j // 2))
                        y = dpu.exec_load(Opcode.LOAD64, pb + 8 * kp)
                    else:
                        x, y = xs[j // 2], ys[kp]
                    xj = (x >> (32 * (j % 2))) & MASK32
                    for k in (2 * kp, 2 * kp + 1):
                        yk = (y >> (32 * (k % 2))) & MASK32
                        m = dpu.exec_alu(Opcode.AND, xj, yk)
                        pop = dpu.exec_cao(m)
                        if a.signed and _subtracted(j, k):
                            acc = dpu.exec_lsl_sub(acc, pop, j + k)
                        else:
                            acc = dpu.exec_lsl_add(acc, pop, j + k)
            done += 1
            if done % schedule.blocks_per_iteration == 0 or done == a.blocks:
                for _ in range(schedule.control_overhead - 1):
                    dpu.exec_alu(Opcode.ADD, 0, 1)
                dpu.exec_cond_jump(done != a.blocks)
    return KernelResult([_finish(acc, a.signed)], dpu.trace)


def bsdp_dot(
    a: BitPlaneVector, b: BitPlaneVector, schedule: BsdpSchedule = BsdpSchedule(), engine: str = "auto",
) -> KernelResult:
    """Bit-serial dot product of two bit-plane vectors.

    ``engine="scalar"`` steps a traced DPU instruction by instruction;
    ``"vector"`` computes the same sum with numpy and charges the identical
    instruction counts in bulk. ``"auto"`` picks scalar for short vectors.
    """
    _check_pair(a, b)
    if engine == "auto":
        engine = "scalar" if a.blocks <= 8 else "vector"
    if engine == "scalar":
        return _dot_scalar(a, b, schedule)
    if engine == "vector":
        return _dot_vector(a, b, schedule)
    raise ContractError(f"unknown engine {engine!r}")


def naive_dot(x, y) -> int:
    return int(np.dot(np.asarray(x, dtype=np.int64), np.asarray(y, dtype=np.int64)))


# -- native INT8 dot products for comparison -------------------------------

def native_dot_instructions(variant: str = "baseline", unroll_elements: int = 128) -> float:
    """Per-element instruction count of a byte-per-element native dot product.

    ``baseline`` loads both operands byte by byte and multiplies with one
    MUL_SL_SL; ``optimized`` loads eight-byte blocks and is unrolled over
    ``unroll_elements``.
    """
    if variant == "baseline":
        return 2 + 1 + 1 + 2  # two byte loads, multiply, add, loop control
    if variant == "optimized":
        # per 8 elements: 2 LOAD64, 4 LSR 16 to expose the upper bytes,
        # 8 SL_SL/SH_SH products and 8 adds
        per8 = 2 + 4 + 8 + 8
        return (per8 + 3 * 8 / unroll_elements) / 8
    raise ContractError(f"unknown native dot variant {variant!r}")


# -- file format -----------------------------------------------------------

def encode(vec: BitPlaneVector) -> bytes:
    """16-byte header then little-endian words, planes interleaved per block."""
    return _HEADER.pack(FILE_MAGIC, vec.length, int(vec.signed)) + vec.interleaved().astype("<u4").tobytes()


def decode(data: bytes) -> BitPlaneVector:
    if len(data) < _HEADER.size:
        raise ContractError("truncated bit-plane header")
    magic, length, flag = _HEADER.unpack_from(data)
    if magic != FILE_MAGIC or flag not in (0, 1):
        raise ContractError("not a bit-plane buffer")
    body = data[_HEADER.size:]
    if length % BLOCK_ELEMENTS or len(body) != length // BLOCK_ELEMENTS * BLOCK_BYTES:
        raise ContractError("bit-plane body size does not match header")
    words = np.frombuffer(body, dtype="<u4").reshape(-1, PLANES)
    return BitPlaneVector(np.ascontiguousarray(words.T.astype(np.uint32)), int(length), bool(flag))

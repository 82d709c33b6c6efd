"""Row-block GEMV across DPUs: planning, functional execution, and timing.

Each DPU owns a contiguous block of matrix rows and receives a full copy of
the input vector. INT8 rows are processed with the packed native multiply
kernel; INT4 rows are stored as bit planes and use the bit-serial dot product.
Accumulators are 32-bit and wrap.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsdp import BLOCK_ELEMENTS, PAIRS, PLANES, BsdpSchedule, BitPlaneVector, _subtracted, transpose_to_bitplanes
from .bsdp import native_dot_instructions
from .cycle_model import PipelineConfig, kernel_seconds
from .isa import ContractError
from .transfer import (
    BALANCED,
    HOST_TO_PIM,
    PIM_TO_HOST,
    AllocationPolicy,
    RankSet,
    ServerTopology,
    TransferCalibration,
    allocate_ranks,
    transfer_time,
)

INT8 = "INT8"
INT4 = "INT4_BSDP"
DTYPES = (INT8, INT4)
SCENARIOS = ("MV", "V")
RESULT_BYTES = 4

# CPU server reference points, for annotating reports only
SERVER_INT8_GOPS = (200.0, 220.0)
SERVER_INT4_GOPS = (100.0, 110.0)

DEFAULT_COLS = 65536
GIB = 1 << 30
VERIFY_LIMIT_BYTES = 64 << 20
MATRIX_SIZES = tuple((256 << 20) << i for i in range(10))  # 256 MiB .. 128 GiB


def elements_per_byte(dtype: str) -> int:
    if dtype == INT8:
        return 1
    if dtype == INT4:
        return 2
    raise ContractError(f"unknown GEMV dtype {dtype!r}")


def instructions_per_element(dtype: str, schedule: BsdpSchedule = BsdpSchedule()) -> float:
    """Modeled inner-loop cost: the packed INT8 dot loop (8 elements per
    iteration, not unrolled) or the bit-serial loop."""
    if dtype == INT8:
        return native_dot_instructions("optimized", unroll_elements=8)
    if dtype == INT4:
        return schedule.per_element()
    raise ContractError(f"unknown GEMV dtype {dtype!r}")


@dataclass(frozen=True)
class GemvPlan:
    rows: int
    cols: int
    dpu_count: int
    dtype: str
    row_ranges: tuple  # ((start, stop), ...) per DPU

    @property
    def rows_per_dpu(self) -> list[int]:
        return [b - a for a, b in self.row_ranges]

    @property
    def max_rows(self) -> int:
        return max(self.rows_per_dpu)

    @property
    def matrix_bytes(self) -> int:
        return self.rows * self.cols // elements_per_byte(self.dtype)

    @property
    def vector_bytes(self) -> int:
        return self.cols // elements_per_byte(self.dtype)

    @property
    def ops(self) -> int:
        return 2 * self.rows * self.cols


def plan_gemv(rows: int, cols: int, dpu_count: int, dtype: str = INT8) -> GemvPlan:
    elements_per_byte(dtype)
    if dpu_count < 1 or rows < dpu_count:
        raise ContractError(f"need rows >= dpu_count >= 1, got rows={rows}, dpus={dpu_count}")
    if cols < 1:
        raise ContractError("cols must be positive")
    if dtype == INT4 and cols % BLOCK_ELEMENTS:
        raise ContractError(f"INT4 columns must be a multiple of {BLOCK_ELEMENTS}")
    base, extra = divmod(rows, dpu_count)
    ranges, start = [], 0
    for i in range(dpu_count):
        stop = start + base + (1 if i < extra else 0)
        ranges.append((start, stop))
        start = stop
    return GemvPlan(rows, cols, dpu_count, dtype, tuple(ranges))


def plan_for_bytes(matrix_bytes: int, dtype: str, dpu_count: int, cols: int = DEFAULT_COLS) -> GemvPlan:
    elements = matrix_bytes * elements_per_byte(dtype)
    if elements % cols:
        raise ContractError("matrix size is not a whole number of rows")
    return plan_gemv(elements // cols, cols, dpu_count, dtype)


# -- functional ------------------------------------------------------------

@dataclass(frozen=True)
class Int4Matrix:
    """Row-wise bit-plane encoding: ``planes[r, j, w]`` is plane ``j`` of row ``r``."""

    planes: np.ndarray
    rows: int
    cols: int
    signed: bool = True

    def row(self, r: int) -> BitPlaneVector:
        return BitPlaneVector(np.ascontiguousarray(self.planes[r]), self.cols, self.signed)


def encode_int4_matrix(matrix, signed: bool = True, chunk: int = 1024) -> Int4Matrix:
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[1] % BLOCK_ELEMENTS:
        raise ContractError(f"INT4 matrix needs 2 dims and a multiple of {BLOCK_ELEMENTS} columns")
    lo, hi = (-8, 7) if signed else (0, 15)
    if m.size and (m.min() < lo or m.max() > hi):
        raise ContractError(f"values outside [{lo}, {hi}]")
    planes = np.empty((m.shape[0], PLANES, m.shape[1] // BLOCK_ELEMENTS), dtype=np.uint32)
    for s in range(0, m.shape[0], chunk):
        nib = (m[s:s + chunk].astype(np.int16) & 0xF).astype(np.uint8)
        for j in range(PLANES):
            packed = np.packbits((nib >> j) & 1, axis=1, bitorder="little")
            planes[s:s + chunk, j, :] = np.ascontiguousarray(packed).view("<u4")
    return Int4Matrix(planes, m.shape[0], m.shape[1], signed)


def _wrap32(x: np.ndarray) -> np.ndarray:
    return (np.asarray(x, dtype=np.int64) & 0xFFFFFFFF).astype(np.uint32).view(np.int32)


def _int8_rows(block: np.ndarray, vector: np.ndarray, chunk: int = 1024) -> np.ndarray:
    v = vector.astype(np.int64)
    out = np.empty(block.shape[0], dtype=np.int64)
    for s in range(0, block.shape[0], chunk):
        out[s:s + chunk] = block[s:s + chunk].astype(np.int64) @ v
    return out


def _int4_rows(planes: np.ndarray, vec: BitPlaneVector, chunk: int = 256) -> np.ndarray:
    out = np.zeros(planes.shape[0], dtype=np.int64)
    for s in range(0, planes.shape[0], chunk):
        p = planes[s:s + chunk]
        acc = np.zeros(p.shape[0], dtype=np.int64)
        for j, k in PAIRS:
            pop = np.bitwise_count(p[:, j, :] & vec.planes[k]).sum(axis=1, dtype=np.int64) << (j + k)
            acc = acc - pop if vec.signed and _subtracted(j, k) else acc + pop
        out[s:s + chunk] = acc
    return out


def run_gemv_functional(plan: GemvPlan, matrix, vector) -> np.ndarray:
    """Execute the plan DPU by DPU and concatenate the partial results.

    For INT8, ``matrix`` is an int8 array of shape (rows, cols) and ``vector``
    has ``cols`` int8 values. For INT4, ``matrix`` is an :class:`Int4Matrix`
    (or a plain array, which is encoded first) and ``vector`` a
    :class:`BitPlaneVector` or plain values.
    """
    if plan.dtype == INT8:
        m = np.asarray(matrix)
        v = np.asarray(vector)
        if m.shape != (plan.rows, plan.cols) or v.shape != (plan.cols,):
            raise ContractError("matrix/vector shape does not match plan")
        parts = [_int8_rows(m[a:b], v) for a, b in plan.row_ranges]
    else:
        m = matrix if isinstance(matrix, Int4Matrix) else encode_int4_matrix(matrix)
        v = vector if isinstance(vector, BitPlaneVector) else transpose_to_bitplanes(vector, m.signed)
        if (m.rows, m.cols) != (plan.rows, plan.cols) or v.length != plan.cols:
            raise ContractError("matrix/vector shape does not match plan")
        if v.signed != m.signed:
            raise ContractError("matrix and vector signedness differ")
        parts = [_int4_rows(m.planes[a:b], v) for a, b in plan.row_ranges]
    return _wrap32(np.concatenate(parts))


def naive_gemv(matrix, vector, chunk: int = 1024) -> np.ndarray:
    m = np.asarray(matrix)
    v = np.asarray(vector, dtype=np.int64)
    out = np.empty(m.shape[0], dtype=np.int64)
    for s in range(0, m.shape[0], chunk):
        out[s:s + chunk] = np.einsum("ij,j->i", m[s:s + chunk].astype(np.int64), v)
    return _wrap32(out)


# -- timing ----------------------------------------------------------------

@dataclass(frozen=True)
class TimingBreakdown:
    scenario: str
    matrix_transfer_s: float
    vector_transfer_s: float
    compute_s: float
    result_transfer_s: float
    gops: float

    @property
    def total_s(self) -> float:
        return self.matrix_transfer_s + self.vector_transfer_s + self.compute_s + self.result_transfer_s


def default_ranks(topo: ServerTopology = ServerTopology()) -> RankSet:
    return allocate_ranks(topo.total_ranks, AllocationPolicy(BALANCED), topo)


def estimate_gemv(
    plan: GemvPlan,
    scenario: str = "V",
    ranks: RankSet | None = None,
    cal: TransferCalibration = TransferCalibration(),
    topo: ServerTopology = ServerTopology(),
    pipeline: PipelineConfig = PipelineConfig(),
    tasklets: int | None = None,
    schedule: BsdpSchedule = BsdpSchedule(),
) -> TimingBreakdown:
    if scenario not in SCENARIOS:
        raise ContractError(f"scenario must be one of {SCENARIOS}")
    ranks = ranks if ranks is not None else default_ranks(topo)
    if plan.dpu_count > ranks.dpu_count(topo):
        raise ContractError(f"plan uses {plan.dpu_count} DPUs but the ranks hold {ranks.dpu_count(topo)}")
    tasklets = pipeline.saturation_tasklets if tasklets is None else tasklets
    per_dpu_instr = plan.max_rows * plan.cols * instructions_per_element(plan.dtype, schedule)
    compute = kernel_seconds(per_dpu_instr, tasklets, pipeline)
    # matrix and vector go out in parallel mode; the vector is replicated per DPU
    matrix_t = transfer_time(plan.matrix_bytes, ranks, HOST_TO_PIM, "local", cal, topo) if scenario == "MV" else 0.0
    vector_t = transfer_time(plan.vector_bytes * plan.dpu_count, ranks, HOST_TO_PIM, "local", cal, topo)
    result_t = transfer_time(plan.rows * RESULT_BYTES, ranks, PIM_TO_HOST, "local", cal, topo)
    total = matrix_t + vector_t + compute + result_t
    return TimingBreakdown(scenario, matrix_t, vector_t, compute, result_t, plan.ops / total / 1e9)

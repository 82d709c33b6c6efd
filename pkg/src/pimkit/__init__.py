"""Instruction-level models of UPMEM DPU kernels, host transfers and GEMV."""
from .bsdp import BitPlaneVector, BsdpSchedule, bsdp_dot, transpose_to_bitplanes
from .cycle_model import PipelineConfig, ThroughputReport, cycles_of, speedup, throughput_mops
from .gemv import GemvPlan, TimingBreakdown, estimate_gemv, plan_gemv, run_gemv_functional
from .isa import ContractError, Dpu, InstructionTrace, MemoryConfig, Opcode
from .kernels import (
    KernelResult,
    LoopModel,
    dim_mul_int32,
    mul_int8_blocked,
    mul_int8_native,
    mulsi3,
    update_microkernel,
)
from .transfer import (
    AllocationPolicy,
    RankSet,
    ServerTopology,
    TransferCalibration,
    allocate_ranks,
    equal_channel_distribution,
    estimate_throughput,
    transfer_time,
)

__version__ = "0.1.0"

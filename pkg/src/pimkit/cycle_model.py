"""Cycles and tasklet-scaled throughput of a DPU kernel.

Every modeled instruction occupies one issue slot. A tasklet can issue once
every ``saturation_tasklets`` cycles, so aggregate issue rate grows linearly
with the tasklet count until it saturates at one instruction per cycle.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .isa import ContractError, InstructionTrace


@dataclass(frozen=True)
class PipelineConfig:
    stages: int = 14
    saturation_tasklets: int = 11
    max_tasklets: int = 16
    frequency_hz: float = 400e6

    def __post_init__(self):
        if not 1 <= self.saturation_tasklets <= self.stages:
            raise ContractError("saturation tasklets must lie in [1, stages]")
        if self.max_tasklets < self.saturation_tasklets:
            raise ContractError("max_tasklets below saturation point")
        if self.frequency_hz <= 0:
            raise ContractError("frequency must be positive")

    def issue_rate(self, tasklets: int) -> Fraction:
        """Instructions issued per cycle, aggregated over tasklets."""
        if not 1 <= tasklets <= self.max_tasklets:
            raise ContractError(f"tasklets must be in [1, {self.max_tasklets}], got {tasklets}")
        return Fraction(min(tasklets, self.saturation_tasklets), self.saturation_tasklets)


@dataclass(frozen=True)
class ThroughputReport:
    tasklets: int
    cycles_per_element: float
    mops: float


def cycles_of(trace: InstructionTrace) -> int:
    return trace.total_instructions


def throughput_mops(per_element_cycles: float, tasklets: int = 11, cfg: PipelineConfig = PipelineConfig()) -> ThroughputReport:
    if per_element_cycles <= 0:
        raise ContractError("cycles per element must be positive")
    rate = cfg.issue_rate(tasklets)
    mops = cfg.frequency_hz * float(rate) / per_element_cycles / 1e6
    return ThroughputReport(tasklets, float(per_element_cycles), mops)


def tasklet_sweep(per_element_cycles: float, cfg: PipelineConfig = PipelineConfig()) -> list[ThroughputReport]:
    return [throughput_mops(per_element_cycles, t, cfg) for t in range(1, cfg.max_tasklets + 1)]


def speedup(baseline: ThroughputReport, optimized: ThroughputReport) -> float:
    if baseline.mops <= 0:
        raise ContractError("baseline throughput is zero")
    return optimized.mops / baseline.mops


def kernel_seconds(instructions: float, tasklets: int = 11, cfg: PipelineConfig = PipelineConfig()) -> float:
    """Wall time of ``instructions`` spread over ``tasklets`` on one DPU."""
    return instructions / float(cfg.issue_rate(tasklets)) / cfg.frequency_hz

"""Server topology, rank allocation policies, and host<->PIM transfer throughput.

The server has two sockets. Each socket drives five PIM channels with two
DIMMs per channel and two ranks of 64 DPUs per DIMM. Throughput is built up
from channels to sockets:

* a channel with one active DIMM moves ``channel_cap * efficiency``; with both
  DIMMs active the pair contends and the channel rate drops by
  ``dual_dimm_factor``
* a socket cannot exceed its host-side cap
* traffic from a buffer on the other socket is scaled by ``cross_numa_penalty``
* host DRAM bandwidth and a machine-wide cap bound the total
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence, Union

from .isa import ContractError

HOST_TO_PIM = "host_to_pim"
PIM_TO_HOST = "pim_to_host"
DIRECTIONS = (HOST_TO_PIM, PIM_TO_HOST)
BASELINE = "baseline_sequential"
BALANCED = "numa_channel_balanced"
TRANSFER_BLOCK_BYTES = 32 << 20

Coord = tuple  # (socket, channel, dimm, rank)
Placement = Union[int, str, None]


class AllocationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ServerTopology:
    sockets: int = 2
    dram_channels: int = 1
    pim_channels: int = 5
    dimms_per_channel: int = 2
    ranks_per_dimm: int = 2
    dpus_per_rank: int = 64
    disabled_dpus: int = 9

    def __post_init__(self):
        dims = (self.sockets, self.pim_channels, self.dimms_per_channel, self.ranks_per_dimm, self.dpus_per_rank)
        if min(dims) < 1 or self.dram_channels < 1:
            raise ContractError("topology dimensions must be positive")
        if not 0 <= self.disabled_dpus < self.dpus_per_rank:
            raise ContractError("disabled DPUs must fit within one rank")

    @property
    def ranks_per_channel(self) -> int:
        return self.dimms_per_channel * self.ranks_per_dimm

    @property
    def ranks_per_socket(self) -> int:
        return self.pim_channels * self.ranks_per_channel

    @property
    def total_ranks(self) -> int:
        return self.sockets * self.ranks_per_socket

    @property
    def total_dpus(self) -> int:
        return self.total_ranks * self.dpus_per_rank - self.disabled_dpus

    def device_order(self) -> list[Coord]:
        """Fixed enumeration order used by the sequential allocator."""
        return [
            (s, c, d, r)
            for s in range(self.sockets)
            for c in range(self.pim_channels)
            for d in range(self.dimms_per_channel)
            for r in range(self.ranks_per_dimm)
        ]

    def valid(self, coord: Coord) -> bool:
        s, c, d, r = coord
        return (0 <= s < self.sockets and 0 <= c < self.pim_channels
                and 0 <= d < self.dimms_per_channel and 0 <= r < self.ranks_per_dimm)

    def rank_dpus(self, coord: Coord) -> int:
        # faulty DPUs are all placed in the last rank of the device order
        last = self.device_order()[-1]
        return self.dpus_per_rank - (self.disabled_dpus if tuple(coord) == last else 0)


@dataclass(frozen=True)
class RankSet:
    ranks: tuple

    def __post_init__(self):
        if len(set(self.ranks)) != len(self.ranks):
            raise ContractError("duplicate rank coordinates")

    def __len__(self) -> int:
        return len(self.ranks)

    def dpu_count(self, topo: ServerTopology) -> int:
        return sum(topo.rank_dpus(c) for c in self.ranks)

    def sockets(self) -> list[int]:
        return sorted({c[0] for c in self.ranks})

    def channel_dimms(self) -> dict:
        """Active DIMM indices per (socket, channel)."""
        out: dict = {}
        for s, c, d, _ in self.ranks:
            out.setdefault((s, c), set()).add(d)
        return out


@dataclass(frozen=True)
class AllocationPolicy:
    kind: str = BASELINE
    node: int | None = None
    channel_distribution: tuple | None = None

    def __post_init__(self):
        if self.kind not in (BASELINE, BALANCED):
            raise ContractError(f"unknown allocation policy {self.kind!r}")


@dataclass(frozen=True)
class TransferCalibration:
    """Per-direction throughput constants in GB/s (10**9 bytes per second)."""

    channel_cap_gbps: float = 19.2
    write_channel_efficiency: float = 0.75
    read_channel_efficiency: float = 0.459
    dual_dimm_factor: float = 0.826
    host_write_socket_cap_gbps: float = 15.0
    host_read_socket_cap_gbps: float = 10.0
    host_write_agg_cap_gbps: float = 30.0
    host_read_agg_cap_gbps: float = 14.56
    dram_read_cap_gbps: float = 25.6
    dram_write_cap_gbps: float = 13.24
    cross_numa_penalty: float = 0.739

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value <= 0:
                raise ContractError(f"{name} must be positive")
        if not self.cross_numa_penalty <= 1:
            raise ContractError("cross_numa_penalty must be at most 1")
        if not 0 < self.dual_dimm_factor <= 1:
            raise ContractError("dual_dimm_factor must be in (0, 1]")
        if self.host_write_agg_cap_gbps <= self.host_read_agg_cap_gbps:
            raise ContractError("write aggregate cap must exceed read aggregate cap")

    def direction_params(self, direction: str) -> tuple[float, float, float, float]:
        """``(channel rate, socket cap, aggregate cap, host DRAM cap)``."""
        if direction == HOST_TO_PIM:
            # PIM writes stream out of host DRAM
            return (self.channel_cap_gbps * self.write_channel_efficiency, self.host_write_socket_cap_gbps,
                    self.host_write_agg_cap_gbps, self.dram_read_cap_gbps)
        if direction == PIM_TO_HOST:
            return (self.channel_cap_gbps * self.read_channel_efficiency, self.host_read_socket_cap_gbps,
                    self.host_read_agg_cap_gbps, self.dram_write_cap_gbps)
        raise ContractError(f"unknown direction {direction!r}")


def equal_channel_distribution(n: int, socket: int = 0, topo: ServerTopology = ServerTopology()) -> list[int]:
    """Spread ``n`` ranks over one socket's PIM channels, earlier channels first."""
    if not 0 <= n <= topo.ranks_per_socket:
        raise ContractError(f"rank count {n} outside [0, {topo.ranks_per_socket}]")
    if not 0 <= socket < topo.sockets:
        raise ContractError(f"no socket {socket}")
    base, extra = divmod(n, topo.pim_channels)
    return [base + (1 if c < extra else 0) for c in range(topo.pim_channels)]


def _fill_channel(socket: int, channel: int, count: int, topo: ServerTopology) -> list[Coord]:
    if count > topo.ranks_per_channel:
        raise AllocationError(f"channel {channel} has only {topo.ranks_per_channel} ranks")
    order = [(socket, channel, d, r) for d in range(topo.dimms_per_channel) for r in range(topo.ranks_per_dimm)]
    return order[:count]


def _socket_counts(n: int, policy: AllocationPolicy, topo: ServerTopology) -> list[int]:
    if policy.node is not None:
        if not 0 <= policy.node < topo.sockets:
            raise ContractError(f"no socket {policy.node}")
        if n > topo.ranks_per_socket:
            raise AllocationError(f"{n} ranks requested on one socket; only {topo.ranks_per_socket} exist")
        return [n if s == policy.node else 0 for s in range(topo.sockets)]
    base, extra = divmod(n, topo.sockets)
    return [base + (1 if s < extra else 0) for s in range(topo.sockets)]


def allocate_ranks(n: int, policy: AllocationPolicy = AllocationPolicy(), topo: ServerTopology = ServerTopology()) -> RankSet:
    if n < 1:
        raise ContractError("at least one rank must be requested")
    if n > topo.total_ranks:
        raise AllocationError(f"{n} ranks requested; only {topo.total_ranks} exist")
    if policy.kind == BASELINE:
        return RankSet(tuple(topo.device_order()[:n]))

    if policy.channel_distribution is not None:
        dist = list(policy.channel_distribution)
        if sum(dist) != n:
            raise ContractError("channel distribution does not sum to the rank count")
        if len(dist) == topo.pim_channels:
            sockets = [policy.node or 0]
            per_socket = [dist]
        elif len(dist) == topo.pim_channels * topo.sockets:
            sockets = list(range(topo.sockets))
            per_socket = [dist[s * topo.pim_channels:(s + 1) * topo.pim_channels] for s in sockets]
        else:
            raise ContractError("channel distribution must cover one socket or all sockets")
    else:
        counts = _socket_counts(n, policy, topo)
        sockets = [s for s in range(topo.sockets) if counts[s]]
        per_socket = [equal_channel_distribution(counts[s], s, topo) for s in sockets]

    coords: list[Coord] = []
    for s, dist in zip(sockets, per_socket):
        for c, k in enumerate(dist):
            if k < 0:
                raise ContractError("negative channel count")
            coords.extend(_fill_channel(s, c, k, topo))
    return RankSet(tuple(coords))


def _socket_rates(ranks: RankSet, direction: str, cal: TransferCalibration, topo: ServerTopology) -> list[float]:
    chan, socket_cap, _, _ = cal.direction_params(direction)
    sums = [0.0] * topo.sockets
    for (s, _c), dimms in ranks.channel_dimms().items():
        sums[s] += chan * (cal.dual_dimm_factor if len(dimms) > 1 else 1.0)
    return [min(socket_cap, v) for v in sums]


def estimate_throughput(
    ranks: RankSet,
    direction: str = HOST_TO_PIM,
    placement: Placement = "local",
    cal: TransferCalibration = TransferCalibration(),
    topo: ServerTopology = ServerTopology(),
) -> float:
    """Modeled parallel-mode throughput in GB/s.

    ``placement`` is the socket holding the host buffer, ``"local"`` when each
    socket's ranks are served from a buffer on that socket, or ``None`` for a
    NUMA-unaware buffer whose socket is equally likely to be either.
    """
    if not len(ranks):
        raise ContractError("empty rank set")
    for c in ranks.ranks:
        if not topo.valid(c):
            raise ContractError(f"rank {c} not in topology")
    _, _, agg_cap, dram_cap = cal.direction_params(direction)
    rates = _socket_rates(ranks, direction, cal, topo)
    if placement is None:
        total = sum(_placed(rates, b, cal, dram_cap) for b in range(topo.sockets)) / topo.sockets
    elif placement == "local":
        total = sum(min(r, dram_cap) for r in rates)
    elif isinstance(placement, int) and 0 <= placement < topo.sockets:
        total = _placed(rates, placement, cal, dram_cap)
    else:
        raise ContractError(f"bad buffer placement {placement!r}")
    return min(total, agg_cap)


def _placed(rates: Sequence[float], socket: int, cal: TransferCalibration, dram_cap: float) -> float:
    total = sum(r if s == socket else r * cal.cross_numa_penalty for s, r in enumerate(rates))
    return min(total, dram_cap)


def policy_placement(policy: AllocationPolicy) -> Placement:
    """Buffer placement each policy implies: NUMA-aware buffers for the
    balanced allocator, an arbitrary socket for the baseline."""
    if policy.kind == BASELINE:
        return None
    return "local" if policy.node is None else policy.node


def transfer_time(
    nbytes: int,
    ranks: RankSet,
    direction: str = HOST_TO_PIM,
    placement: Placement = "local",
    cal: TransferCalibration = TransferCalibration(),
    topo: ServerTopology = ServerTopology(),
) -> float:
    """Seconds to move ``nbytes``, in whole 32 MiB transfer blocks."""
    if nbytes <= 0:
        raise ContractError("transfer size must be positive")
    blocks = math.ceil(nbytes / TRANSFER_BLOCK_BYTES)
    gbps = estimate_throughput(ranks, direction, placement, cal, topo)
    return blocks * TRANSFER_BLOCK_BYTES / (gbps * 1e9)


@dataclass(frozen=True)
class SweepPoint:
    ranks: int
    direction: str
    baseline_gbps: float
    balanced_gbps: float

    @property
    def ratio(self) -> float:
        return self.balanced_gbps / self.baseline_gbps


def sweep(
    rank_counts: Iterable[int], cal: TransferCalibration = TransferCalibration(),
    topo: ServerTopology = ServerTopology(),
) -> list[SweepPoint]:
    base_p, bal_p = AllocationPolicy(BASELINE), AllocationPolicy(BALANCED)
    out = []
    for n in rank_counts:
        rb, rl = allocate_ranks(n, base_p, topo), allocate_ranks(n, bal_p, topo)
        for d in DIRECTIONS:
            out.append(SweepPoint(
                n, d,
                estimate_throughput(rb, d, policy_placement(base_p), cal, topo),
                estimate_throughput(rl, d, policy_placement(bal_p), cal, topo),
            ))
    return out

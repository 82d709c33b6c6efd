import pytest
from hypothesis import given, strategies as st

from pimkit.transfer import (
    BALANCED,
    BASELINE,
    DIRECTIONS,
    HOST_TO_PIM,
    PIM_TO_HOST,
    AllocationError,
    AllocationPolicy,
    RankSet,
    ServerTopology,
    TransferCalibration,
    allocate_ranks,
    equal_channel_distribution,
    estimate_throughput,
    policy_placement,
    sweep,
    transfer_time,
)
from pimkit.isa import ContractError

TOPO = ServerTopology()
BAL = AllocationPolicy(BALANCED)
BASE = AllocationPolicy(BASELINE)


def test_topology_counts():
    assert TOPO.total_ranks == 40
    assert TOPO.total_dpus == 2551
    assert allocate_ranks(40, BAL).dpu_count(TOPO) == 2551


def test_equal_channel_distribution():
    assert equal_channel_distribution(5) == [1, 1, 1, 1, 1]
    assert equal_channel_distribution(2) == [1, 1, 0, 0, 0]
    assert equal_channel_distribution(13) == [3, 3, 3, 2, 2]
    with pytest.raises(ContractError):
        equal_channel_distribution(21)


@given(st.integers(0, 20))
def test_distribution_balanced(n):
    d = equal_channel_distribution(n)
    assert sum(d) == n and max(d) - min(d) <= 1


def test_balanced_four_ranks():
    rs = allocate_ranks(4, BAL)
    channels = {(s, c) for s, c, _, _ in rs.ranks}
    assert len(channels) == 4
    assert sorted(s for s, _, _, _ in rs.ranks) == [0, 0, 1, 1]


def test_baseline_four_ranks_concentrated():
    rs = allocate_ranks(4, BASE)
    assert len({r[0] for r in rs.ranks}) == 1
    assert len({r[:2] for r in rs.ranks}) <= 2


def test_exhaustion_and_limits():
    everything = set(TOPO.device_order())
    assert set(allocate_ranks(40, BAL).ranks) == everything
    assert set(allocate_ranks(40, BASE).ranks) == everything
    with pytest.raises(AllocationError):
        allocate_ranks(41, BASE)
    with pytest.raises(AllocationError):
        allocate_ranks(21, AllocationPolicy(BALANCED, node=0))
    rs = allocate_ranks(20, AllocationPolicy(BALANCED, node=1))
    assert {r[0] for r in rs.ranks} == {1}


def test_explicit_distribution():
    rs = allocate_ranks(3, AllocationPolicy(BALANCED, node=0, channel_distribution=(2, 1, 0, 0, 0)))
    assert sorted(r[1] for r in rs.ranks) == [0, 0, 1]
    with pytest.raises(ContractError):
        allocate_ranks(3, AllocationPolicy(BALANCED, channel_distribution=(1, 1, 0, 0, 0)))


def test_rankset_rejects_duplicates():
    with pytest.raises(ContractError):
        RankSet(((0, 0, 0, 0), (0, 0, 0, 0)))


@given(st.integers(1, 40), st.sampled_from(DIRECTIONS))
def test_balanced_not_worse(n, d):
    base = estimate_throughput(allocate_ranks(n, BASE), d, policy_placement(BASE))
    bal = estimate_throughput(allocate_ranks(n, BAL), d, policy_placement(BAL))
    assert bal >= base


@given(st.integers(1, 40), st.sampled_from([BASE, BAL]), st.sampled_from([None, "local", 0, 1]))
def test_write_beats_read(n, policy, placement):
    rs = allocate_ranks(n, policy)
    assert estimate_throughput(rs, HOST_TO_PIM, placement) > estimate_throughput(rs, PIM_TO_HOST, placement)


def test_plateau_and_remote_penalty():
    four = estimate_throughput(allocate_ranks(4, BAL), HOST_TO_PIM)
    eight = estimate_throughput(allocate_ranks(8, BAL), HOST_TO_PIM)
    assert four == eight
    rs = allocate_ranks(2, BASE)
    assert estimate_throughput(rs, HOST_TO_PIM, 1) < estimate_throughput(rs, HOST_TO_PIM, 0)


def test_ratio_peaks_early():
    pts = [p for p in sweep(range(2, 41, 2)) if p.direction == HOST_TO_PIM]
    early = max(p.ratio for p in pts if p.ranks <= 10)
    assert early == max(p.ratio for p in pts)
    assert pts[-1].ratio < early


def test_transfer_time():
    rs = allocate_ranks(40, BAL)
    t1 = transfer_time(64 << 20, rs)
    assert transfer_time(128 << 20, rs) == pytest.approx(2 * t1)
    assert transfer_time(1, rs) == transfer_time(32 << 20, rs)
    with pytest.raises(ContractError):
        transfer_time(0, rs)
    vec = transfer_time(65536 * 2551, rs)
    assert 2e-3 <= vec <= 7e-3


def test_calibration_validation():
    with pytest.raises(ContractError):
        TransferCalibration(cross_numa_penalty=1.5)
    with pytest.raises(ContractError):
        TransferCalibration(host_write_agg_cap_gbps=10.0)
    with pytest.raises(ContractError):
        estimate_throughput(allocate_ranks(2, BAL), "sideways")

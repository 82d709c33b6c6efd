import numpy as np
import pytest
from hypothesis import given, strategies as st

from pimkit.config import Settings, dump_settings, load_settings, parse_settings
from pimkit.formats import decode_array, encode_array, pack_int4, read_array, unpack_int4, write_array
from pimkit.isa import ContractError


def test_defaults_and_overrides():
    assert parse_settings("") == Settings()
    s = parse_settings("[calibration]\ncross_numa_penalty = 0.5\n[bsdp]\nkind = register\n[topology]\ndisabled_dpus = 0\n")
    assert s.calibration.cross_numa_penalty == 0.5
    assert s.bsdp.loads_per_block == 4
    assert s.topology.total_dpus == 2560


def test_round_trip(tmp_path):
    s = parse_settings("[pipeline]\nsaturation_tasklets = 10\n")
    path = tmp_path / "model.ini"
    path.write_text(dump_settings(s))
    assert load_settings(str(path)) == s
    assert load_settings(None) == Settings()


def test_rejects_unknown():
    with pytest.raises(ContractError):
        parse_settings("[nonsense]\na = 1\n")
    with pytest.raises(ContractError):
        parse_settings("[calibration]\nmystery = 1\n")
    with pytest.raises(ContractError):
        parse_settings("[calibration]\ncross_numa_penalty = lots\n")


@given(st.lists(st.integers(-8, 7), min_size=0, max_size=64).filter(lambda v: len(v) % 2 == 0))
def test_int4_packing(vals):
    assert unpack_int4(pack_int4(vals), len(vals)).tolist() == vals


def test_int4_low_nibble_first():
    assert pack_int4([1, 2]) == bytes([0x21])
    assert pack_int4([-1, 0]) == bytes([0x0F])


@pytest.mark.parametrize("dtype,lo,hi", [("INT8", -128, 127), ("INT4", -8, 7), ("INT32", -(1 << 31), (1 << 31) - 1)])
def test_array_files(tmp_path, dtype, lo, hi):
    a = np.random.default_rng(0).integers(lo, hi, (6, 32), endpoint=True)
    path = str(tmp_path / f"{dtype}.bin")
    write_array(path, a, dtype)
    back, name = read_array(path)
    assert name == dtype and np.array_equal(back, a)


def test_bad_files():
    with pytest.raises(ContractError):
        decode_array(b"short")
    good = encode_array(np.zeros((2, 4)), "INT8")
    with pytest.raises(ContractError):
        decode_array(good[:-1])
    with pytest.raises(ContractError):
        encode_array(np.array([[300]]), "INT8")

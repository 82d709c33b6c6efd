import json

import numpy as np
import pytest

from pimkit import cli
from pimkit.formats import read_array, write_array


def run(capsys, *argv):
    code = cli.main(list(argv))
    return code, capsys.readouterr()


def test_arith_table(capsys):
    code, out = run(capsys, "arith", "--elements", "16384")
    assert code == 0
    assert "[PASS]" in out.out and "mops_t11" in out.out


def test_arith_json_embeds_calibration(capsys):
    code, out = run(capsys, "arith", "--dtype", "INT32", "--op", "MUL", "--elements", "4096", "--format", "json")
    rep = json.loads(out.out)
    assert code == 0
    assert rep["calibration"]["pipeline"]["saturation_tasklets"] == 11
    assert rep["calibration"]["calibration"]["channel_cap_gbps"] == 19.2
    assert {r["variant"] for r in rep["results"]} == {"baseline", "DIM"}


def test_does_not_link_is_reported(capsys):
    code, out = run(capsys, "arith", "--dtype", "INT32", "--op", "MUL", "--variant", "DIM", "--unroll", "auto",
                    "--elements", "4096", "--format", "json")
    rep = json.loads(out.out)
    assert code == 0 and rep["results"][0]["status"] == "does not link"


def test_usage_errors(capsys):
    assert cli.main(["arith", "--variant", "NIx8"]) == 2
    assert cli.main(["bsdp", "--length", "33"]) == 2
    assert cli.main(["transfer", "--ranks", "1"]) == 2
    assert cli.main(["arith", "--config", "/nonexistent.ini"]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2


def test_bsdp_csv(capsys, tmp_path):
    out_path = tmp_path / "r.csv"
    code, _ = run(capsys, "bsdp", "--length", "1024", "--format", "csv", "--out", str(out_path))
    lines = out_path.read_text().splitlines()
    assert code == 0 and lines[0].startswith("kernel,") and len(lines) == 4


def test_transfer_json(capsys):
    code, out = run(capsys, "transfer", "--ranks", "2-10", "--format", "json")
    rep = json.loads(out.out)
    assert code == 0
    assert rep["summary"]["host_to_pim_balanced_plateau_from"] == 4


def test_gemv_files(capsys, tmp_path):
    rng = np.random.default_rng(5)
    m = rng.integers(-8, 7, (40, 64), endpoint=True)
    v = rng.integers(-8, 7, 64, endpoint=True)
    write_array(str(tmp_path / "m.bin"), m, "INT4")
    write_array(str(tmp_path / "v.bin"), v, "INT4")
    res = tmp_path / "r.bin"
    code, out = run(capsys, "gemv", "--sizes", "256M", "--verify-bytes", "64K", "--matrix", str(tmp_path / "m.bin"),
                    "--vector", str(tmp_path / "v.bin"), "--result-out", str(res), "--dpus", "6")
    assert code == 0, out.out
    got, dtype = read_array(str(res))
    assert dtype == "INT32" and np.array_equal(got[0], m @ v)


def test_config_changes_report(capsys, tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[pipeline]\nfrequency_hz = 200e6\n")
    _, a = run(capsys, "bsdp", "--length", "256", "--format", "json")
    _, b = run(capsys, "bsdp", "--length", "256", "--format", "json", "--config", str(ini))
    ra, rb = json.loads(a.out), json.loads(b.out)
    assert rb["results"][0]["mops_t11"] == pytest.approx(ra["results"][0]["mops_t11"] / 2)


def test_oracle_failure_exit_code(capsys, monkeypatch):
    from pimkit import bench

    monkeypatch.setattr(bench, "naive_dot", lambda x, y: -12345)
    code, out = run(capsys, "bsdp", "--length", "64")
    assert code == 1 and "[FAIL]" in out.out

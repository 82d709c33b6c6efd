"""``pimkit`` command line: arith, bsdp, transfer and gemv benchmarks.

Exit status is 0 when every inline oracle check passes, 1 when one fails,
and 2 for usage errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import bench
from . import gemv as G
from .config import load_settings
from .formats import read_array, write_array
from .isa import ContractError

EXIT_OK, EXIT_ORACLE, EXIT_USAGE = 0, 1, 2


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def _size(text: str) -> int:
    units = {"k": 1 << 10, "m": 1 << 20, "g": 1 << 30}
    t = text.strip().lower().rstrip("ib")
    if t and t[-1] in units:
        return int(float(t[:-1]) * units[t[-1]])
    return int(t)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [topology], [calibration], [pipeline], [bsdp]")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("table", "json", "csv"), default="table")
    common.add_argument("--out", help="write the report here instead of stdout")

    p = argparse.ArgumentParser(prog="pimkit", description="DPU kernel, transfer and GEMV models.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("arith", parents=[common], help="scalar update microbenchmark")
    a.add_argument("--dtype", choices=("INT8", "INT32"), default="INT8")
    a.add_argument("--op", choices=("ADD", "MUL"), default="ADD")
    a.add_argument("--variant", default="all", help="comma list, or 'all'")
    a.add_argument("--unroll", default="1", help="comma list of 1, N, full or auto")
    a.add_argument("--elements", type=int, default=1 << 20)
    a.add_argument("--scalar", type=int)
    a.add_argument("--sample-blocks", type=int, default=4, help="1024-byte blocks traced per case")

    b = sub.add_parser("bsdp", parents=[common], help="bit-serial dot product")
    b.add_argument("--length", type=int, default=8192)
    b.add_argument("--unsigned", action="store_true")

    t = sub.add_parser("transfer", parents=[common], help="host<->PIM transfer sweep")
    t.add_argument("--ranks", type=_int_list, help="e.g. 2,4,8 or 2-10")

    g = sub.add_parser("gemv", parents=[common], help="GEMV estimates and functional check")
    g.add_argument("--dtype", choices=("INT8", "INT4", "both"), default="both")
    g.add_argument("--sizes", help="comma list of matrix sizes, e.g. 256M,1G")
    g.add_argument("--cols", type=int, default=G.DEFAULT_COLS)
    g.add_argument("--dpus", type=int)
    g.add_argument("--verify-bytes", type=_size, default=1 << 20)
    g.add_argument("--matrix", help="GEMV matrix file to multiply")
    g.add_argument("--vector", help="GEMV vector file to multiply")
    g.add_argument("--result-out", help="where to write the product of --matrix and --vector")
    return p


def _run(args, settings) -> dict:
    if args.command == "arith":
        unrolls = tuple(u.strip() for u in args.unroll.split(","))
        for u in unrolls:
            if u not in ("full", "auto") and not u.isdigit():
                raise ValueError(f"bad unroll {u!r}")
        return bench.run_arith_bench(
            settings, args.dtype, args.op, tuple(v.strip() for v in args.variant.split(",")), unrolls,
            args.elements, args.scalar, args.sample_blocks, args.seed)
    if args.command == "bsdp":
        return bench.run_bsdp_bench(settings, args.length, not args.unsigned, args.seed)
    if args.command == "transfer":
        return bench.run_transfer_bench(settings, args.ranks)
    dtypes = (G.INT8, G.INT4) if args.dtype == "both" else ((G.INT8,) if args.dtype == "INT8" else (G.INT4,))
    sizes = tuple(_size(s) for s in args.sizes.split(",")) if args.sizes else G.MATRIX_SIZES
    report = bench.run_gemv_bench(settings, dtypes, sizes, args.cols, args.dpus, args.verify_bytes, args.seed)
    if args.matrix or args.vector:
        _file_gemv(args, report)
    return report


def _file_gemv(args, report: dict) -> None:
    if not (args.matrix and args.vector):
        raise ValueError("--matrix and --vector must be given together")
    m, mdt = read_array(args.matrix)
    v, vdt = read_array(args.vector)
    if mdt != vdt or mdt not in ("INT8", "INT4") or v.shape[0] != 1:
        raise ValueError("matrix and vector must share an INT8 or INT4 dtype; vector must have one row")
    dtype = G.INT8 if mdt == "INT8" else G.INT4
    dpus = min(args.dpus or 8, m.shape[0])
    res = G.run_gemv_functional(G.plan_gemv(m.shape[0], m.shape[1], dpus, dtype), m, v[0])
    bench._check(report, "file GEMV matches oracle", np.array_equal(res, G.naive_gemv(m, v[0])))
    report["summary"]["file_rows"] = int(m.shape[0])
    if args.result_out:
        write_array(args.result_out, res, "INT32")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    rows = report["results"]
    keys: list = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) if k in r else "" for k in keys})
        return buf.getvalue()
    # keep tables narrow: tasklet sweeps show only a few points
    shown = [k for k in keys if not k.startswith("mops_t") or k in ("mops_t1", "mops_t8", "mops_t11", "mops_t16")]
    shown = [k for k in shown if k != "detail"]
    cells = [[_fmt(r.get(k, "")) for k in shown] for r in rows]
    widths = [max(len(k), *(len(c[i]) for c in cells)) if cells else len(k) for i, k in enumerate(shown)]
    lines = ["  ".join(k.ljust(w) for k, w in zip(shown, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in cells]
    lines.append("")
    lines += [f"{k}: {_fmt(v)}" for k, v in report["summary"].items()]
    lines += [f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}" for c in report["checks"]]
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = load_settings(args.config)
        report = _run(args, settings)
    except (ValueError, ContractError, OSError) as exc:
        print(f"pimkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = render(report, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if bench.passed(report) else EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())

"""Benchmark drivers behind the command-line tool.

Each ``run_*`` function takes plain parameters plus :class:`Settings` and
returns a report dict with ``parameters``, ``calibration``, ``results``
(a list of flat rows), ``summary`` and ``checks``. Reports contain no
timestamps or host details, so identical inputs give identical reports.
"""
from __future__ import annotations

import statistics

import numpy as np

from . import gemv as G
from .bsdp import bsdp_dot, naive_dot, native_dot_instructions, transpose_to_bitplanes, value_range
from .config import Settings
from .cycle_model import throughput_mops
from .isa import Opcode, mul_byte_value, u32
from .kernels import (
    BLOCK_SIZE,
    DTYPES,
    VARIANTS,
    IramOverflowError,
    dim_batch,
    mul_int8_blocked_batch,
    mulsi3_batch,
    native_update,
    per_element_instructions,
    update_microkernel,
)
from .transfer import DIRECTIONS, HOST_TO_PIM, PIM_TO_HOST, sweep

DEFAULT_SCALAR = {"INT8": 5, "INT32": 12345678}


def _report(command: str, params: dict, settings: Settings) -> dict:
    return {"command": command, "parameters": params, "calibration": settings.as_dict(),
            "results": [], "summary": {}, "checks": []}


def _check(report: dict, name: str, passed: bool) -> None:
    report["checks"].append({"name": name, "passed": bool(passed)})


def passed(report: dict) -> bool:
    return all(c["passed"] for c in report["checks"])


# -- arithmetic --------------------------------------------------------------

def _full_buffer_result(data: np.ndarray, scalar: int, op: str, dtype: str, variant: str):
    """Run the whole buffer through the lane-wise kernels.

    Returns ``(signed results, mean MUL_STEP count, negation fraction)``.
    """
    width = DTYPES[dtype]
    bits = 8 * width
    steps = negs = None
    if op == "ADD":
        res = data + scalar
    elif variant == "NI":
        res = mul_byte_value(Opcode.MUL_SL_SL, True, u32(data) & np.uint32(0xFF), np.uint32(scalar & 0xFF)).astype(np.int64)
    elif variant in ("NIx4", "NIx8"):
        blocks = np.ascontiguousarray(data.astype(np.int8)).view("<u8")
        packed = mul_int8_blocked_batch(blocks, np.full(blocks.shape, scalar))
        res = packed.view(np.int8).astype(np.int64)
    elif variant == "DIM":
        prod, counts = dim_batch(data, np.full(data.shape, scalar))
        res = prod.astype(np.int64)
        negs = float((counts - 24).mean())
    else:
        lhs = data & 0xFF if width == 1 else data
        prod, step_counts = mulsi3_batch(lhs, np.full(data.shape, scalar & (0xFF if width == 1 else 0xFFFFFFFF)))
        res = prod.astype(np.int64)
        steps = float(step_counts.mean())
    res = res & ((1 << bits) - 1)
    res = np.where(res >= 1 << (bits - 1), res - (1 << bits), res)
    return res, steps, negs


def run_arith_bench(
    settings: Settings, dtype: str = "INT8", op: str = "ADD", variants=("all",), unrolls=("1",),
    elements: int = 1 << 20, scalar: int | None = None, sample_blocks: int = 4, seed: int = 0,
) -> dict:
    scalar = DEFAULT_SCALAR[dtype] if scalar is None else scalar
    available = VARIANTS.get((op, dtype))
    if available is None:
        raise ValueError(f"unsupported op/dtype {op}/{dtype}")
    variants = list(available) if "all" in variants else list(variants)
    for v in variants:
        if v not in available:
            raise ValueError(f"variant {v} not available for {dtype} {op}")
    width = DTYPES[dtype]
    per_block = BLOCK_SIZE // width
    if elements < per_block or elements % per_block:
        raise ValueError(f"elements must be a positive multiple of {per_block}")
    report = _report("arith", {
        "dtype": dtype, "op": op, "variants": variants, "unrolls": list(unrolls), "elements": elements,
        "scalar": scalar, "sample_blocks": sample_blocks, "seed": seed,
    }, settings)
    rng = np.random.default_rng(seed)
    lo, hi = (-128, 127) if width == 1 else (-(1 << 31), (1 << 31) - 1)
    data = rng.integers(lo, hi, size=elements, endpoint=True, dtype=np.int64)
    n_blocks = elements // per_block
    picks = sorted(rng.choice(n_blocks, size=min(sample_blocks, n_blocks), replace=False).tolist())
    oracle = native_update(data, scalar, op, dtype)
    cfg = settings.pipeline
    saturated = {}
    for variant in variants:
        full, steps, negs = _full_buffer_result(data, scalar, op, dtype, variant)
        _check(report, f"{variant} full buffer matches oracle", np.array_equal(full, oracle))
        for unroll in unrolls:
            u = unroll if unroll in ("full", "auto") else int(unroll)
            row = {"variant": variant, "unroll": str(unroll)}
            try:
                instr = 0
                ok = True
                for b in picks:
                    chunk = data[b * per_block:(b + 1) * per_block]
                    res = update_microkernel(chunk, scalar, op, dtype, variant, unroll=u)
                    instr += res.trace.total_instructions
                    ok &= np.array_equal(np.asarray(res.outputs), oracle[b * per_block:(b + 1) * per_block])
            except IramOverflowError as exc:
                row.update(status="does not link", detail=str(exc))
                report["results"].append(row)
                continue
            _check(report, f"{variant} unroll={unroll} traced blocks match oracle", ok)
            measured = instr / (len(picks) * per_block)
            model = per_element_instructions(op, dtype, variant, u, mul_steps=steps,
                                             dim_negations=negs if negs is not None else 0.5)
            worst = per_element_instructions(op, dtype, variant, u, dim_negations=1.0)
            row.update(status="ok", cycles_per_element=measured, model_cycles_per_element=model,
                       worst_cycles_per_element=worst, mean_mul_steps=steps)
            for t in range(1, cfg.max_tasklets + 1):
                row[f"mops_t{t}"] = throughput_mops(measured, t, cfg).mops
            row["worst_mops"] = throughput_mops(worst, cfg.saturation_tasklets, cfg).mops
            saturated[variant, str(unroll)] = row[f"mops_t{cfg.saturation_tasklets}"]
            report["results"].append(row)
    sat = cfg.saturation_tasklets
    summary = {f"mops_{v}_unroll_{u}": m for (v, u), m in saturated.items()}
    for (v, u), m in saturated.items():
        ref = saturated.get(("baseline", u))
        if v != "baseline" and ref:
            summary[f"speedup_{v}_vs_baseline_unroll_{u}"] = m / ref
        rolled = saturated.get((v, "1"))
        if u != "1" and rolled:
            summary[f"unroll_gain_{v}_{u}"] = m / rolled
    summary["saturation_tasklets"] = sat
    report["summary"] = summary
    return report


# -- bit-serial dot product --------------------------------------------------

def run_bsdp_bench(settings: Settings, length: int = 8192, signed: bool = True, seed: int = 0) -> dict:
    if length < 32 or length % 32:
        raise ValueError("length must be a positive multiple of 32")
    report = _report("bsdp", {"length": length, "signed": signed, "seed": seed}, settings)
    rng = np.random.default_rng(seed)
    lo, hi = value_range(signed)
    x = rng.integers(lo, hi, size=length, endpoint=True)
    y = rng.integers(lo, hi, size=length, endpoint=True)
    res = bsdp_dot(transpose_to_bitplanes(x, signed), transpose_to_bitplanes(y, signed), settings.bsdp)
    expected = naive_dot(x, y)
    _check(report, "dot product matches oracle", res.outputs[0] == expected)
    cfg = settings.pipeline
    kernels = {
        "bsdp": res.trace.total_instructions / length,
        "native_baseline": native_dot_instructions("baseline"),
        "native_optimized": native_dot_instructions("optimized"),
    }
    mops = {}
    for name, cpe in kernels.items():
        row = {"kernel": name, "cycles_per_element": cpe}
        for t in range(1, cfg.max_tasklets + 1):
            row[f"mops_t{t}"] = throughput_mops(cpe, t, cfg).mops
        mops[name] = row[f"mops_t{cfg.saturation_tasklets}"]
        report["results"].append(row)
    report["summary"] = {
        "dot": int(res.outputs[0]),
        "oracle": expected,
        "bsdp_vs_native_baseline": mops["bsdp"] / mops["native_baseline"],
        "bsdp_vs_native_optimized": mops["bsdp"] / mops["native_optimized"],
        "instructions": res.trace.total_instructions,
    }
    return report


# -- transfers ---------------------------------------------------------------

def run_transfer_bench(settings: Settings, rank_counts=None) -> dict:
    topo = settings.topology
    rank_counts = list(rank_counts) if rank_counts else list(range(2, topo.total_ranks + 1, 2))
    for n in rank_counts:
        if not 2 <= n <= topo.total_ranks:
            raise ValueError(f"rank count {n} outside [2, {topo.total_ranks}]")
    report = _report("transfer", {"ranks": rank_counts}, settings)
    pts = sweep(rank_counts, settings.calibration, topo)
    for p in pts:
        report["results"].append({"ranks": p.ranks, "direction": p.direction, "baseline_gbps": p.baseline_gbps,
                                  "balanced_gbps": p.balanced_gbps, "ratio": p.ratio})
    summary = {}
    for d in DIRECTIONS:
        sel = [p for p in pts if p.direction == d]
        small = [p for p in sel if 2 <= p.ranks <= 10]
        if small:
            summary[f"{d}_peak_ratio_2_10"] = max(p.ratio for p in small)
            summary[f"{d}_mean_ratio_2_10"] = statistics.fmean(p.ratio for p in small)
        largest = max(sel, key=lambda p: p.ranks)
        summary[f"{d}_ratio_at_{largest.ranks}"] = largest.ratio
        peak = max(p.balanced_gbps for p in sel)
        summary[f"{d}_balanced_peak_gbps"] = peak
        summary[f"{d}_balanced_plateau_from"] = min(p.ranks for p in sel if p.balanced_gbps == peak)
        _check(report, f"{d} balanced >= baseline", all(p.balanced_gbps >= p.baseline_gbps for p in sel))
    by_key = {(p.ranks, p.direction): p for p in pts}
    _check(report, "writes faster than reads", all(
        by_key[n, HOST_TO_PIM].baseline_gbps > by_key[n, PIM_TO_HOST].baseline_gbps
        and by_key[n, HOST_TO_PIM].balanced_gbps > by_key[n, PIM_TO_HOST].balanced_gbps for n in rank_counts))
    report["summary"] = summary
    return report


# -- GEMV --------------------------------------------------------------------

def _random_operands(rng, dtype: str, rows: int, cols: int):
    lo, hi = (-128, 127) if dtype == G.INT8 else (-8, 7)
    m = rng.integers(lo, hi, size=(rows, cols), endpoint=True, dtype=np.int64).astype(np.int8)
    v = rng.integers(lo, hi, size=cols, endpoint=True, dtype=np.int64).astype(np.int8)
    return m, v


def verify_gemv(rng, dtype: str, matrix_bytes: int, cols: int, partitions=(1, 3, 8)) -> bool:
    elements = matrix_bytes * G.elements_per_byte(dtype)
    rows = max(elements // cols, max(partitions))
    m, v = _random_operands(rng, dtype, rows, cols)
    oracle = G.naive_gemv(m, v)
    operand = G.encode_int4_matrix(m) if dtype == G.INT4 else m
    return all(np.array_equal(G.run_gemv_functional(G.plan_gemv(rows, cols, k, dtype), operand, v), oracle)
               for k in partitions)


def run_gemv_bench(
    settings: Settings, dtypes=(G.INT8, G.INT4), sizes=G.MATRIX_SIZES, cols: int = G.DEFAULT_COLS,
    dpus: int | None = None, verify_bytes: int = 1 << 20, seed: int = 0,
) -> dict:
    topo = settings.topology
    dpus = topo.total_dpus if dpus is None else dpus
    if verify_bytes > G.VERIFY_LIMIT_BYTES:
        raise ValueError("functional verification is limited to 64 MiB matrices")
    report = _report("gemv", {"dtypes": list(dtypes), "sizes": list(sizes), "cols": cols, "dpus": dpus,
                              "verify_bytes": verify_bytes, "seed": seed}, settings)
    rng = np.random.default_rng(seed)
    ranks = G.default_ranks(topo)
    best = {}
    for dtype in dtypes:
        if verify_bytes:
            vcols = min(cols, 4096)
            _check(report, f"{dtype} functional GEMV matches oracle",
                   verify_gemv(rng, dtype, verify_bytes, vcols))
        for size in sizes:
            plan = G.plan_for_bytes(size, dtype, dpus, cols)
            for scenario in G.SCENARIOS:
                t = G.estimate_gemv(plan, scenario, ranks, settings.calibration, topo, settings.pipeline,
                                    schedule=settings.bsdp)
                report["results"].append({
                    "dtype": dtype, "matrix_bytes": size, "scenario": scenario, "rows": plan.rows,
                    "matrix_transfer_s": t.matrix_transfer_s, "vector_transfer_s": t.vector_transfer_s,
                    "compute_s": t.compute_s, "result_transfer_s": t.result_transfer_s, "gops": t.gops,
                    "estimate_only": size > verify_bytes,
                    "compute_over_io": t.compute_s / (t.vector_transfer_s + t.result_transfer_s),
                    "matrix_over_compute": t.matrix_transfer_s / t.compute_s,
                })
                key = (dtype, scenario)
                best[key] = max(best.get(key, 0.0), t.gops)
    summary = {f"peak_gops_{d}_{s}": g for (d, s), g in best.items()}
    if (G.INT8, "V") in best and (G.INT4, "V") in best:
        summary["int4_over_int8_gemv_v"] = best[G.INT4, "V"] / best[G.INT8, "V"]
    summary["server_reference_int8_gops"] = list(G.SERVER_INT8_GOPS)
    summary["server_reference_int4_gops"] = list(G.SERVER_INT4_GOPS)
    report["summary"] = summary
    return report

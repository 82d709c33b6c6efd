# GEMV on 2551 DPUs: matrix resident (V) or shipped every call (MV).
import numpy as np

from pimkit import gemv as G

rng = np.random.default_rng(2)
m = rng.integers(-8, 7, (300, 256), endpoint=True, dtype=np.int8)
v = rng.integers(-8, 7, 256, endpoint=True, dtype=np.int8)
out = G.run_gemv_functional(G.plan_gemv(300, 256, 8, G.INT4), G.encode_int4_matrix(m), v)
print("INT4 functional check:", np.array_equal(out, G.naive_gemv(m, v)))

print(f"{'size':>8} {'dtype':>10} {'scen':>4} {'compute':>9} {'matrix':>9} {'GOPS':>8}")
for size in G.MATRIX_SIZES[::3]:
    for dtype in G.DTYPES:
        plan = G.plan_for_bytes(size, dtype, 2551)
        for scen in G.SCENARIOS:
            t = G.estimate_gemv(plan, scen)
            print(f"{size >> 20:7d}M {dtype:>10} {scen:>4} {t.compute_s:9.4f} {t.matrix_transfer_s:9.4f} {t.gops:8.1f}")
print("CPU server reference (INT8):", G.SERVER_INT8_GOPS, "GOPS")

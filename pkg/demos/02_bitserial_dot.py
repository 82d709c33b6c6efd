# 4-bit dot products from bit planes: AND, popcount, shifted accumulate.
import numpy as np

from pimkit.bsdp import BsdpSchedule, bsdp_dot, naive_dot, native_dot_instructions, transpose_to_bitplanes
from pimkit.cycle_model import throughput_mops

rng = np.random.default_rng(1)
x = rng.integers(-8, 7, 4096, endpoint=True)
y = rng.integers(-8, 7, 4096, endpoint=True)
A, B = transpose_to_bitplanes(x, signed=True), transpose_to_bitplanes(y, signed=True)

print("first block, planes 0..3:", [f"{w:08x}" for w in A.planes[:, 0]])
res = bsdp_dot(A, B)
print("dot =", res.outputs[0], " numpy =", naive_dot(x, y))

for sched in (BsdpSchedule("tiled"), BsdpSchedule("register")):
    cpe = sched.per_element()
    print(f"{sched.kind:8s} {cpe:.4f} instr/elem -> {throughput_mops(cpe).mops:6.1f} MOPS")

base = throughput_mops(native_dot_instructions("baseline")).mops
opt = throughput_mops(native_dot_instructions("optimized")).mops
bs = throughput_mops(BsdpSchedule().per_element()).mops
print(f"vs byte-per-element dot: {bs / base:.2f}x, vs packed 64-bit loads: {bs / opt:.2f}x")

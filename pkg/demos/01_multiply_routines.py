# Software multiply vs. the byte multiplier, one DPU, 11 tasklets.
import numpy as np

from pimkit.cycle_model import throughput_mops
from pimkit.isa import Opcode
from pimkit.kernels import dim_mul_int32, mulsi3, per_element_instructions, update_microkernel

# shift-and-add: one MUL_STEP per bit of the smaller operand
for a, b in [(7, 9), (5, 200), (12345678, 3), (-1, -1)]:
    r = mulsi3(a, b)
    print(f"mulsi3({a}, {b}) = {r.outputs[0]:#x}  steps={r.trace.count(Opcode.MUL_STEP)}  total={len(r.trace)}")

# decomposed multiply has a fixed cost
r = dim_mul_int32(-300, 200)
print("dim(-300, 200) trace:", {op.value: n for op, n in r.trace.histogram().items()})

rng = np.random.default_rng(0)
buf = rng.integers(-128, 127, 4096, endpoint=True)
for variant in ("baseline", "NI", "NIx4", "NIx8"):
    for unroll in (1, "full"):
        res = update_microkernel(buf, 5, "MUL", "INT8", variant, unroll=unroll)
        cpe = res.trace.total_instructions / buf.size
        print(f"INT8 MUL {variant:8s} unroll={unroll!s:4s} {cpe:6.3f} instr/elem  {throughput_mops(cpe).mops:7.2f} MOPS")

# worst case for a baseline INT32 multiply: 32 steps per element
print("INT32 baseline worst:", throughput_mops(per_element_instructions("MUL", "INT32", "baseline")).mops)
print("INT32 DIM worst     :", throughput_mops(per_element_instructions("MUL", "INT32", "DIM", dim_negations=1)).mops)

# Where ranks land decides how fast data moves.
from pimkit.transfer import (
    BALANCED,
    BASELINE,
    AllocationPolicy,
    allocate_ranks,
    sweep,
)

print("sequential, 4 ranks:", allocate_ranks(4, AllocationPolicy(BASELINE)).ranks)
print("balanced,   4 ranks:", allocate_ranks(4, AllocationPolicy(BALANCED)).ranks)

print(f"{'ranks':>5} {'dir':>12} {'base':>7} {'bal':>7} {'ratio':>6}")
for p in sweep([2, 4, 6, 8, 10, 20, 40]):
    print(f"{p.ranks:5d} {p.direction:>12} {p.baseline_gbps:7.2f} {p.balanced_gbps:7.2f} {p.ratio:6.2f}")

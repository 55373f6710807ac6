# How well does an LRU buffer cache follow the simple "cache holds the
# hottest blocks" model under a Zipf(1) access stream?
#
# Two analytic curves are compared against a simulated cache:
#   top-C mass  -- popularity of the C hottest blocks (static/ideal cache)
#   Che         -- characteristic-time approximation for LRU
import numpy as np

from dbtune.sim import SimConfig, analytic_hit_ratio, che_hit_ratio, execute_query, new_state
from dbtune.workload import make_rng

B = 1000          # blocks in the table
N = 100_000       # accesses per point

# one block per MB keeps the cache size in blocks equal to the ladder value
sizes = [10, 50, 100, 200, 400]
cfg = SimConfig(block_size_kb=1024, buffer_ladder_mb=sizes)

# same access trace for every cache size
w = np.arange(1, B + 1) ** -1.0
cdf = np.cumsum(w) / w.sum()
trace = np.minimum(np.searchsorted(cdf, make_rng(0).random(N), side="right"), B - 1).tolist()

print(f"{'C':>5} {'LRU sim':>9} {'Che':>9} {'top-C':>9}")
for C in sizes:
    state = new_state(cfg, C, 32)
    for b in trace:
        execute_query(state, cfg, [b], 0, 1)
    hit = 1 - state.misses / state.accesses
    print(f"{C:>5} {hit:9.4f} {che_hit_ratio(C, B, 1.0):9.4f} {analytic_hit_ratio(C, B, 1.0):9.4f}")

# LRU tracks Che closely; the top-C mass is an upper bound it never reaches.

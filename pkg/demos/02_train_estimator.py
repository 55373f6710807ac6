# Train the 3-100-2 sigmoid network on the bundled eight-row sample set and
# look at what it estimates for each row.
import numpy as np

from dbtune import estimator as est
from dbtune.monitor import MetricsSnapshot
from dbtune.sim import SimConfig

cfg = est.NetConfig()   # 100 hidden units, learning rate 0.4, 100 epochs
tset = est.table_one()  # users column is blank in the CSV and filled with 8

model, trace = est.train(est.init_model(cfg), tset, cfg)
print("mse after epochs 1, 10, 50, 100:", [round(trace[i], 4) for i in (0, 9, 49, 99)])

# gradient sanity check on a small random net
small = est.init_model(est.NetConfig(n_hidden=5, seed=1))
rng = np.random.default_rng(0)
print("gradient check max rel err:", est.gradient_check(small, rng.random(3), rng.random(2)))

sim = SimConfig()
print(f"\n{'rows':>6} {'miss':>7} | {'pool':>4} {'cache':>5} | {'est pool':>8} {'est cache':>9} {'raw':>14}")
for (rows, miss, users), (pool, cache) in zip(tset.features, tset.targets):
    snap = MetricsSnapshot(1, 0, miss, int(users), int(rows), 0.0, 0)
    p, c = est.estimate_sizes(model, snap, sim.buffer_ladder_mb, sim.pool_ladder_mb)
    raw = est.estimate_raw(model, [rows, miss, users])
    print(f"{rows:6.0f} {miss:7.4f} | {pool:4.0f} {cache:5.0f} | {p:8d} {c:9d}   ({raw[0]:.1f}, {raw[1]:.1f})")

# Two open-loop experiments on the simulator:
#   1. bigger buffer cache -> lower mean response (same seeded workload)
#   2. more concurrent users -> response rises sharply past ~12 users
from dbtune import harness
from dbtune.workload import WorkloadSpec

wl = WorkloadSpec(initial_table_rows=200_000, user_schedule=[(0, 8)], seed=11)
cfg = harness.ScenarioConfig(workload=wl, total_ticks=1000)

print("cache sweep (8 users)")
for size, mean, miss in harness.sweep_buffer(cfg, [4, 8, 16, 32, 64]):
    print(f"  {size:>3} MB   mean {mean:6.3f} ms   miss ratio {miss:.4f}")

print("\nuser sweep (16 MB cache)")
for users in (2, 4, 8, 10, 12, 14, 16):
    run = cfg.replace(initial_cache_mb=16,
                      workload=WorkloadSpec(initial_table_rows=200_000, user_schedule=[(0, users)], seed=5),
                      total_ticks=500)
    print(f"  {users:>3} users   mean {harness.simulate(run).summary()['mean_response_ms']:7.3f} ms")

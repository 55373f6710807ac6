# The full loop: characterize the simulator, train the estimator on the
# generated labels, then run a 4 -> 16 user step with and without tuning.
from pathlib import Path

from dbtune import estimator as est
from dbtune import harness

cfg = harness.load_config(Path(__file__).with_name("step_scenario.json"))

rows, warnings = harness.gen_training_data(cfg)
print(f"{len(rows)} labelled rows, {len(warnings)} warnings")
for r in rows:
    print("  rows={:>6} miss={:.4f} users={:>2} -> pool {:>3} MB, cache {:>3} MB".format(*r))

tset = est.TrainingSet([r[:3] for r in rows], [r[3:] for r in rows])
model, trace = est.train(est.init_model(cfg.net), tset, cfg.net)
print(f"training mse {trace[-1]:.4f}")

untuned = harness.simulate(cfg.replace(tuning_enabled=False, model_path=None))
tuned = harness.simulate(cfg, model=model)

print(f"\n{'win':>4} {'users':>5} {'untuned ms':>11} {'tuned ms':>9} {'cache':>6} rule")
for a, b in zip(untuned.rows, tuned.rows):
    print(f"{a['window_id']:>4} {a['users']:>5} {a['mean_response_ms']:11.3f} {b['mean_response_ms']:9.3f} "
          f"{b['cache_mb']:>6} {b['rule']}")

ua, tb = untuned.summary(), tuned.summary()
print(f"\nfinal-half mean: untuned {ua['final_half_mean_response_ms']:.3f} ms, "
      f"tuned {tb['final_half_mean_response_ms']:.3f} ms")
print("decisions:", tb["decisions"])

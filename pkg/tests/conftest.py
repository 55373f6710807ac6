import numpy as np
import pytest

from dbtune import estimator as est
from dbtune import harness
from dbtune.workload import WorkloadSpec


def step_scenario(**overrides) -> harness.ScenarioConfig:
    """Users step 4 -> 16 at mid-run on a table that overflows the 4 MB cache."""
    wl = WorkloadSpec(initial_table_rows=57_600, growth_rows_per_tick=4,
                      user_schedule=[(0, 4), (1000, 16)], seed=7)
    cfg = harness.ScenarioConfig(workload=wl, total_ticks=2000, initial_cache_mb=4, initial_pool_mb=32)
    return cfg.replace(**overrides)


def characterization_grid() -> harness.GenDataConfig:
    return harness.GenDataConfig(table_rows=[40_000, 60_000, 80_000], users=[4, 8, 12, 16],
                                 target_response_ms=15.0, ticks=300, warmup_ticks=50)


def sweep_scenario(**overrides) -> harness.ScenarioConfig:
    wl = WorkloadSpec(initial_table_rows=200_000, user_schedule=[(0, 8)], seed=11)
    return harness.ScenarioConfig(workload=wl, total_ticks=1000).replace(**overrides)


@pytest.fixture(scope="session")
def characterized_model():
    """Estimator trained on simulator-generated labels for the step scenario."""
    cfg = step_scenario(gen_data=characterization_grid())
    rows, _ = harness.gen_training_data(cfg)
    tset = est.TrainingSet([r[:3] for r in rows], [r[3:] for r in rows])
    model, _ = est.train(est.init_model(cfg.net), tset, cfg.net)
    return model


@pytest.fixture(scope="session")
def table_one_model():
    cfg = est.NetConfig()
    return est.train(est.init_model(cfg), est.table_one(), cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {key}: {detail}")

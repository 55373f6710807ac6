"""Closed-loop composition: workload -> simulator -> monitor -> estimator -> tuner.

Also hosts the experiment drivers (buffer sweeps, characterization data
generation, training) and the JSON scenario config they share.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import statistics
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from . import estimator as est
from .monitor import MonitorConfig, WindowAccumulator, close_window, record
from .sim import SimConfig, execute_query, new_state
from .tuner import (TunerConfig, apply, decide, new_tuner_state, seed_baseline,
                    write_decision_log)
from .workload import WorkloadSpec, advance_tick, make_rng, next_transaction

log = logging.getLogger(__name__)

RUN_HEADER = ("window_id", "end_tick", "users", "table_rows", "miss_ratio",
              "mean_response_ms", "cache_mb", "pool_mb", "rule")
ESTIMATE_HEADER = ("window_id", "est_pool_mb", "est_cache_mb", "raw_pool_mb", "raw_cache_mb")
SWEEP_HEADER = ("cache_mb", "mean_response_ms", "miss_ratio")


class ConfigError(ValueError):
    pass


@dataclass
class SweepConfig:
    sizes: list[int] = field(default_factory=lambda: [4, 8, 16, 32, 64])


@dataclass
class GenDataConfig:
    table_rows: list[int] = field(default_factory=lambda: [20_000, 40_000, 60_000, 80_000])
    users: list[int] = field(default_factory=lambda: [4, 8, 12, 16])
    target_response_ms: float = 15.0
    ticks: int = 300
    warmup_ticks: int = 50

    def __post_init__(self):
        if not self.table_rows or not self.users:
            raise ValueError("gen_data grid must be nonempty")
        if not 0 <= self.warmup_ticks < self.ticks:
            raise ValueError("need 0 <= warmup_ticks < ticks")


@dataclass
class ScenarioConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    tuner: TunerConfig = field(default_factory=TunerConfig)
    net: est.NetConfig = field(default_factory=est.NetConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    gen_data: GenDataConfig = field(default_factory=GenDataConfig)
    total_ticks: int = 2000
    initial_cache_mb: int = 4
    initial_pool_mb: int = 32
    tuning_enabled: bool = False
    model_path: str | None = None
    output_dir: str = "out"

    def __post_init__(self):
        if self.total_ticks < self.monitor.window_ticks:
            raise ConfigError("total_ticks must be >= monitor.window_ticks")
        if self.initial_cache_mb not in self.sim.buffer_ladder_mb:
            raise ConfigError(f"initial_cache_mb {self.initial_cache_mb} is not on the buffer ladder")
        if self.initial_pool_mb not in self.sim.pool_ladder_mb:
            raise ConfigError(f"initial_pool_mb {self.initial_pool_mb} is not on the pool ladder")

    def replace(self, **changes) -> ScenarioConfig:
        return dataclasses.replace(self, **changes)


_SECTIONS = {
    "sim": SimConfig,
    "workload": WorkloadSpec,
    "monitor": MonitorConfig,
    "tuner": TunerConfig,
    "net": est.NetConfig,
    "sweep": SweepConfig,
    "gen_data": GenDataConfig,
}


def _build(cls, doc, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")
    top = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(doc) - top)
    if unknown:
        raise ConfigError(f"config: unknown keys {unknown}")
    kwargs = {}
    for key, value in doc.items():
        kwargs[key] = _build(_SECTIONS[key], value, key) if key in _SECTIONS else value
    try:
        return ScenarioConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: {exc}") from None


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return config_from_dict(doc)


def with_seed(cfg: ScenarioConfig, seed: int) -> ScenarioConfig:
    """Override the workload and network seeds."""
    try:
        return cfg.replace(workload=dataclasses.replace(cfg.workload, seed=seed),
                           net=dataclasses.replace(cfg.net, seed=seed))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# -- the closed loop ---------------------------------------------------------

@dataclass
class RunResult:
    rows: list[dict]
    decisions: list
    estimates: list[tuple]
    final_cache_mb: int
    final_pool_mb: int
    accesses: int
    misses: int

    @property
    def miss_ratio(self) -> float:
        return self.misses / self.accesses if self.accesses else 0.0

    def summary(self) -> dict:
        means = [r["mean_response_ms"] for r in self.rows]
        tail = means[len(means) // 2:]
        return {
            "windows": len(means),
            "mean_response_ms": statistics.fmean(means),
            "median_response_ms": statistics.median(means),
            "final_half_mean_response_ms": statistics.fmean(tail),
            "final_half_median_response_ms": statistics.median(tail),
            "decisions": dict(sorted(Counter(d.rule_fired for d in self.decisions).items())),
            "changes": sum(d.changed for d in self.decisions),
            "final_cache_mb": self.final_cache_mb,
            "final_pool_mb": self.final_pool_mb,
            "miss_ratio": self.miss_ratio,
        }


def resolve_model(cfg: ScenarioConfig, model=None):
    """Model for the estimator, loaded from ``cfg.model_path`` if not given."""
    if model is not None:
        return model
    if cfg.model_path is None:
        if cfg.tuning_enabled:
            raise ConfigError("tuning is enabled but no model_path was given")
        return None
    path = Path(cfg.model_path)
    if not path.is_file():
        if cfg.tuning_enabled:
            raise ConfigError(f"model file not found: {path}")
        return None
    return est.load_model(path)


def simulate(cfg: ScenarioConfig, model=None) -> RunResult:
    """Run the loop in memory; see :func:`run_scenario` for the file-writing variant."""
    model = resolve_model(cfg, model)
    sim_cfg, wl = cfg.sim, cfg.workload
    state = new_state(sim_cfg, cfg.initial_cache_mb, cfg.initial_pool_mb)
    tstate = new_tuner_state(cfg.tuner)
    rng = make_rng(wl.seed)
    acc = WindowAccumulator()
    window = cfg.monitor.window_ticks
    rows, estimates = [], []

    for tick in range(cfg.total_ticks):
        table_rows, users = advance_tick(wl, tick)
        for user in range(users):
            tx = next_transaction(wl, rng, table_rows, user)
            record(acc, execute_query(state, sim_cfg, tx.blocks, tx.stmt, users), len(tx.blocks))
        if (tick + 1) % window and tick + 1 != cfg.total_ticks:
            continue

        snap = close_window(acc, tick + 1, users, table_rows)
        cache, pool = state.buffer_cache_mb, state.shared_pool_mb
        rule = "off"
        if model is not None:
            guess = est.estimate_sizes(model, snap, sim_cfg.buffer_ladder_mb, sim_cfg.pool_ladder_mb)
            raw = est.estimate_raw(model, [snap.table_rows, snap.buffer_miss_ratio, snap.active_users])
            estimates.append((snap.window_id, *guess, float(raw[0]), float(raw[1])))
            if cfg.tuning_enabled:
                seed_baseline(tstate, snap)
                decision = decide(tstate, cfg.tuner, snap, guess, (pool, cache), sim_cfg)
                apply(decision, state, sim_cfg, tstate, snap)
                rule = decision.rule_fired
        rows.append({
            "window_id": snap.window_id,
            "end_tick": snap.end_tick,
            "users": snap.active_users,
            "table_rows": snap.table_rows,
            "miss_ratio": snap.buffer_miss_ratio,
            "mean_response_ms": snap.mean_response_ms,
            "cache_mb": cache,
            "pool_mb": pool,
            "rule": rule,
            "queries": snap.queries,
        })

    return RunResult(rows, tstate.decision_log, estimates, state.buffer_cache_mb,
                     state.shared_pool_mb, state.accesses, state.misses)


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def _write_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _out_dir(out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_scenario(cfg: ScenarioConfig, model=None, out_dir=None) -> RunResult:
    """Run the closed loop and write run.csv, decisions.csv, estimates.csv, summary.json."""
    result = simulate(cfg, model)
    out = _out_dir(cfg.output_dir if out_dir is None else out_dir)
    _write_csv(out / "run.csv", RUN_HEADER, ([r[k] for k in RUN_HEADER] for r in result.rows))
    write_decision_log(result.decisions, out / "decisions.csv")
    _write_csv(out / "estimates.csv", ESTIMATE_HEADER, result.estimates)
    summary = result.summary()
    summary["tuning_enabled"] = cfg.tuning_enabled
    summary["seed"] = cfg.workload.seed
    _write_json(out / "summary.json", summary)
    return result


def read_run_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        out = []
        for r in csv.DictReader(fh):
            out.append({k: (r[k] if k == "rule" else float(r[k]) if k in ("miss_ratio", "mean_response_ms")
                            else int(r[k])) for k in RUN_HEADER})
        return out


# -- experiments ---------------------------------------------------------------

def sweep_buffer(cfg: ScenarioConfig, sizes=None, out_dir=None) -> list[tuple[int, float, float]]:
    """Untuned runs of the same seeded workload, one per buffer cache size."""
    sizes = list(cfg.sweep.sizes if sizes is None else sizes)
    if not sizes:
        raise ConfigError("sweep needs at least one size")
    bad = [s for s in sizes if s not in cfg.sim.buffer_ladder_mb]
    if bad:
        raise ConfigError(f"sweep sizes {bad} are not on the buffer ladder")
    table = []
    for size in sizes:
        res = simulate(cfg.replace(initial_cache_mb=size, tuning_enabled=False, model_path=None))
        table.append((size, res.summary()["mean_response_ms"], res.miss_ratio))
    if out_dir is not None:
        _write_csv(_out_dir(out_dir) / "sweep.csv", SWEEP_HEADER, table)
    return table


def measure(sim_cfg: SimConfig, wl: WorkloadSpec, cache_mb: int, pool_mb: int,
            ticks: int, warmup_ticks: int = 0) -> tuple[float, float]:
    """Mean response and miss ratio of a fixed-size run, excluding warm-up ticks."""
    state = new_state(sim_cfg, cache_mb, pool_mb)
    rng = make_rng(wl.seed)
    total = 0.0
    queries = accesses = misses = 0
    for tick in range(ticks):
        table_rows, users = advance_tick(wl, tick)
        for user in range(users):
            tx = next_transaction(wl, rng, table_rows, user)
            r = execute_query(state, sim_cfg, tx.blocks, tx.stmt, users)
            if tick >= warmup_ticks:
                total += r.response_ms
                queries += 1
                accesses += len(tx.blocks)
                misses += r.block_misses
    return total / queries, misses / accesses


def gen_training_data(cfg: ScenarioConfig, out_dir=None):
    """Label each (table_rows, users) cell with the smallest adequate sizes.

    The buffer cache is searched first with the shared pool at its top
    rung, then the pool is searched with the chosen cache. Cells where even
    the top rung misses the target are labelled with the top rung and
    reported in the returned warnings.

    Returns ``(rows, warnings)`` with rows in training-CSV column order.
    """
    g, sim_cfg = cfg.gen_data, cfg.sim
    cl, pl = sim_cfg.buffer_ladder_mb, sim_cfg.pool_ladder_mb
    rows, warnings = [], []
    for table_rows in g.table_rows:
        for users in g.users:
            try:
                wl = dataclasses.replace(cfg.workload, initial_table_rows=table_rows,
                                         growth_rows_per_tick=0, user_schedule=[(0, users)])
            except ValueError as exc:
                raise ConfigError(f"gen_data cell ({table_rows}, {users}): {exc}") from None

            def run(cache, pool):
                return measure(sim_cfg, wl, cache, pool, g.ticks, g.warmup_ticks)

            cache = pool = None
            for c in cl:
                if run(c, pl[-1])[0] <= g.target_response_ms:
                    cache = c
                    break
            met = cache is not None
            cache = cl[-1] if cache is None else cache
            for p in pl:
                if run(cache, p)[0] <= g.target_response_ms:
                    pool = p
                    break
            pool = pl[-1] if pool is None else pool
            mean, miss = run(cache, pool)
            if not met:
                msg = (f"target {g.target_response_ms} ms unachievable at top rung for "
                       f"table_rows={table_rows}, users={users} (got {mean:.3f} ms)")
                log.warning(msg)
                warnings.append(msg)
            rows.append((table_rows, miss, users, pool, cache))

    if out_dir is not None:
        out = _out_dir(out_dir)
        est.write_training_csv(rows, out / "training.csv")
        _write_json(out / "gen_data_summary.json", {"rows": len(rows), "warnings": warnings,
                                                    "target_response_ms": g.target_response_ms})
    return rows, warnings


def train_cmd(data_path, net_cfg: est.NetConfig, model_out, trace_out=None,
              default_users: int = est.DEFAULT_USERS, strict: bool = False):
    """Train from a CSV (the bundled sample set when ``data_path`` is None)."""
    tset = est.table_one(default_users) if data_path is None else est.read_training_csv(data_path, default_users)
    model, trace = est.train(est.init_model(net_cfg), tset, net_cfg, strict=strict)
    model_out = Path(model_out)
    model_out.parent.mkdir(parents=True, exist_ok=True)
    est.save_model(model, model_out)
    trace_out = model_out.with_suffix(".mse.csv") if trace_out is None else Path(trace_out)
    trace_out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(trace_out, ("epoch", "mse"), ((i + 1, v) for i, v in enumerate(trace)))
    return model, trace

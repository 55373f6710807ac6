"""Threshold-gated, one-granule-at-a-time size corrections.

Each window the tuner compares the current mean response time with the
response time recorded at the last modification. When the change exceeds
the dead band ``[-r_threshold_ms, +r_threshold_ms]`` and the estimator
points in the same direction, the knob moves a single ladder rung toward
the estimate. A cooldown keeps consecutive modifications apart.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .sim import LadderError, SimConfig, SimState, resize_buffer_cache, resize_shared_pool

RULES = ("increase", "decrease", "hold", "cooldown")
DECISION_HEADER = ("window_id", "delta_r_ms", "rule", "old_cache", "new_cache", "old_pool", "new_pool")


@dataclass
class TunerConfig:
    r_threshold_ms: float = 1.0
    cooldown_windows: int = 3
    tune_shared_pool: bool = False

    def __post_init__(self):
        if not self.r_threshold_ms > 0:
            raise ValueError("r_threshold_ms must be > 0")
        if self.cooldown_windows < 1:
            raise ValueError("cooldown_windows must be >= 1")


@dataclass(frozen=True)
class TuningDecision:
    window_id: int
    delta_r_ms: float
    old_cache_mb: int
    new_cache_mb: int
    old_pool_mb: int
    new_pool_mb: int
    rule_fired: str

    @property
    def changed(self) -> bool:
        return self.new_cache_mb != self.old_cache_mb or self.new_pool_mb != self.old_pool_mb


@dataclass
class TunerState:
    baseline_response_ms: float | None = None
    windows_since_change: int = 0
    decision_log: list[TuningDecision] = field(default_factory=list)


def new_tuner_state(cfg: TunerConfig) -> TunerState:
    # No modification has happened yet, so the first eligible window is not gated.
    return TunerState(windows_since_change=cfg.cooldown_windows)


def seed_baseline(state: TunerState, snapshot) -> None:
    """Take the first completed window as the reference point."""
    if state.baseline_response_ms is None:
        state.baseline_response_ms = snapshot.mean_response_ms


def delta_rtime(state: TunerState, snapshot) -> float:
    if state.baseline_response_ms is None:
        raise ValueError("no baseline response time recorded yet")
    return snapshot.mean_response_ms - state.baseline_response_ms


def _step(ladder, current, target, delta, threshold):
    i, j = ladder.index(current), ladder.index(target)
    if delta > threshold and j > i:
        return ladder[i + 1], "increase"
    if delta < -threshold and j < i:
        return ladder[i - 1], "decrease"
    return current, "hold"


def decide(state: TunerState, cfg: TunerConfig, snapshot, estimate, current, sim_cfg: SimConfig) -> TuningDecision:
    """Pick the next sizes. ``estimate`` and ``current`` are (pool_mb, cache_mb)."""
    est_pool, est_cache = estimate
    cur_pool, cur_cache = current
    cl, pl = sim_cfg.buffer_ladder_mb, sim_cfg.pool_ladder_mb
    for mb, ladder, what in ((est_cache, cl, "estimated cache"), (cur_cache, cl, "current cache"),
                             (est_pool, pl, "estimated pool"), (cur_pool, pl, "current pool")):
        if mb not in ladder:
            raise LadderError(f"{what} size {mb} MB is not on the ladder {ladder}")

    delta = delta_rtime(state, snapshot)
    if state.windows_since_change < cfg.cooldown_windows:
        return TuningDecision(snapshot.window_id, delta, cur_cache, cur_cache, cur_pool, cur_pool, "cooldown")

    new_cache, rule = _step(cl, cur_cache, est_cache, delta, cfg.r_threshold_ms)
    new_pool = cur_pool
    if cfg.tune_shared_pool:
        new_pool, pool_rule = _step(pl, cur_pool, est_pool, delta, cfg.r_threshold_ms)
        if rule == "hold":
            rule = pool_rule
    return TuningDecision(snapshot.window_id, delta, cur_cache, new_cache, cur_pool, new_pool, rule)


def apply(decision: TuningDecision, sim_state: SimState, sim_cfg: SimConfig, state: TunerState, snapshot) -> None:
    """Carry out ``decision`` on the simulator and update the tuner's bookkeeping."""
    if decision.changed:
        if decision.new_cache_mb != sim_state.buffer_cache_mb:
            resize_buffer_cache(sim_state, sim_cfg, decision.new_cache_mb)
        if decision.new_pool_mb != sim_state.shared_pool_mb:
            resize_shared_pool(sim_state, sim_cfg, decision.new_pool_mb)
        state.baseline_response_ms = snapshot.mean_response_ms
        state.windows_since_change = 0
    else:
        state.windows_since_change += 1
    state.decision_log.append(decision)


def replay(log, initial_cache_mb: int, initial_pool_mb: int) -> tuple[int, int]:
    """Final (cache_mb, pool_mb) implied by a decision log."""
    cache, pool = initial_cache_mb, initial_pool_mb
    for d in log:
        if (d.old_cache_mb, d.old_pool_mb) != (cache, pool):
            raise ValueError(f"decision log is inconsistent at window {d.window_id}")
        cache, pool = d.new_cache_mb, d.new_pool_mb
    return cache, pool


def write_decision_log(log, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DECISION_HEADER)
        for d in log:
            w.writerow([d.window_id, repr(float(d.delta_r_ms)), d.rule_fired,
                        d.old_cache_mb, d.new_cache_mb, d.old_pool_mb, d.new_pool_mb])


def read_decision_log(path) -> list[TuningDecision]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [TuningDecision(int(r["window_id"]), float(r["delta_r_ms"]), int(r["old_cache"]), int(r["new_cache"]),
                           int(r["old_pool"]), int(r["new_pool"]), r["rule"]) for r in rows]

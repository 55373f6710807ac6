"""Simulated DBMS memory subsystem.

An LRU buffer cache over disk blocks, a shared-pool plan cache over
statement templates, and a response-time cost model that amplifies the
per-query service time by a user-contention factor.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

DEFAULT_BUFFER_LADDER = (4, 8, 16, 32, 64, 128, 256)
DEFAULT_POOL_LADDER = (32, 40, 48, 56, 64, 80, 96, 128)


class LadderError(ValueError):
    """A size that is not a rung of the configured granule ladder."""


@dataclass
class SimConfig:
    block_size_kb: int = 8
    t_cpu_ms: float = 0.5
    t_io_ms: float = 1.0
    t_parse_ms: float = 2.0
    user_capacity: int = 16
    utilization_ceiling: float = 0.95
    buffer_ladder_mb: list[int] = field(default_factory=lambda: list(DEFAULT_BUFFER_LADDER))
    pool_ladder_mb: list[int] = field(default_factory=lambda: list(DEFAULT_POOL_LADDER))
    plan_slots_per_mb: int = 4

    def __post_init__(self):
        if self.block_size_kb < 1 or 1024 % self.block_size_kb:
            raise ValueError(f"block_size_kb must be a positive divisor of 1024, got {self.block_size_kb}")
        for name in ("t_cpu_ms", "t_io_ms", "t_parse_ms"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.user_capacity < 1:
            raise ValueError("user_capacity must be >= 1")
        if not 0.0 < self.utilization_ceiling < 1.0:
            raise ValueError("utilization_ceiling must lie in (0, 1)")
        if self.plan_slots_per_mb < 1:
            raise ValueError("plan_slots_per_mb must be >= 1")
        for name in ("buffer_ladder_mb", "pool_ladder_mb"):
            ladder = list(getattr(self, name))
            if not ladder:
                raise ValueError(f"{name} must be nonempty")
            if any(v < 1 for v in ladder) or any(b <= a for a, b in zip(ladder, ladder[1:])):
                raise ValueError(f"{name} must be strictly ascending positive integers, got {ladder}")
            setattr(self, name, ladder)

    @property
    def blocks_per_mb(self) -> int:
        return 1024 // self.block_size_kb

    def contention(self, active_users: int) -> float:
        rho = min(active_users / self.user_capacity, self.utilization_ceiling)
        return 1.0 / (1.0 - rho)


@dataclass
class SimState:
    buffer_cache_mb: int
    shared_pool_mb: int
    lru_queue: OrderedDict = field(default_factory=OrderedDict)
    plan_cache: OrderedDict = field(default_factory=OrderedDict)
    accesses: int = 0
    misses: int = 0
    parses: int = 0
    queries: int = 0
    cumulative_response_ms: float = 0.0

    # Capacities are cached here so the hot path never consults the config.
    block_capacity: int = 0
    plan_capacity: int = 0


@dataclass(frozen=True)
class QueryResult:
    response_ms: float
    block_misses: int
    plan_miss: bool


def _check_rung(ladder, mb, what):
    if mb not in ladder:
        raise LadderError(f"{what} size {mb} MB is not on the ladder {list(ladder)}")


def new_state(cfg: SimConfig, buffer_cache_mb: int | None = None, shared_pool_mb: int | None = None) -> SimState:
    """Create an empty (cold) state; sizes default to the bottom rungs."""
    cache = cfg.buffer_ladder_mb[0] if buffer_cache_mb is None else buffer_cache_mb
    pool = cfg.pool_ladder_mb[0] if shared_pool_mb is None else shared_pool_mb
    _check_rung(cfg.buffer_ladder_mb, cache, "buffer cache")
    _check_rung(cfg.pool_ladder_mb, pool, "shared pool")
    return SimState(
        buffer_cache_mb=cache,
        shared_pool_mb=pool,
        block_capacity=cache * cfg.blocks_per_mb,
        plan_capacity=pool * cfg.plan_slots_per_mb,
    )


def _probe(cache: OrderedDict, key, capacity: int) -> bool:
    # MRU lives at the end, LRU at the front.
    if key in cache:
        cache.move_to_end(key)
        return True
    cache[key] = None
    if len(cache) > capacity:
        cache.popitem(last=False)
    return False


def execute_query(state: SimState, cfg: SimConfig, blocks, stmt, active_users: int) -> QueryResult:
    """Run one query against the caches and charge its response time."""
    if len(blocks) == 0:
        raise ValueError("a query must touch at least one block")
    if active_users < 1:
        raise ValueError("active_users must be >= 1")

    lru, cap = state.lru_queue, state.block_capacity
    block_misses = 0
    for b in blocks:
        if not _probe(lru, b, cap):
            block_misses += 1
    plan_miss = not _probe(state.plan_cache, stmt, state.plan_capacity)

    base = cfg.t_cpu_ms + block_misses * cfg.t_io_ms + (cfg.t_parse_ms if plan_miss else 0.0)
    response = base * cfg.contention(active_users)

    state.accesses += len(blocks)
    state.misses += block_misses
    state.parses += plan_miss
    state.queries += 1
    state.cumulative_response_ms += response
    return QueryResult(response, block_misses, plan_miss)


def _shrink(cache: OrderedDict, capacity: int) -> int:
    evicted = 0
    while len(cache) > capacity:
        cache.popitem(last=False)
        evicted += 1
    return evicted


def resize_buffer_cache(state: SimState, cfg: SimConfig, new_mb: int) -> SimState:
    """Change the buffer cache size; shrinking evicts coldest blocks first."""
    _check_rung(cfg.buffer_ladder_mb, new_mb, "buffer cache")
    state.buffer_cache_mb = new_mb
    state.block_capacity = new_mb * cfg.blocks_per_mb
    _shrink(state.lru_queue, state.block_capacity)
    return state


def resize_shared_pool(state: SimState, cfg: SimConfig, new_mb: int) -> SimState:
    _check_rung(cfg.pool_ladder_mb, new_mb, "shared pool")
    state.shared_pool_mb = new_mb
    state.plan_capacity = new_mb * cfg.plan_slots_per_mb
    _shrink(state.plan_cache, state.plan_capacity)
    return state


@lru_cache(maxsize=128)
def _zipf_weights(n: int, s: float) -> np.ndarray:
    w = np.arange(1, n + 1, dtype=np.float64) ** -s
    w.flags.writeable = False
    return w


def analytic_hit_ratio(cache_blocks: int, working_set: int, zipf_s: float) -> float:
    """Popularity mass of the ``cache_blocks`` hottest blocks of a Zipf set.

    This is the independent-reference approximation: the cache is assumed
    to hold exactly the most popular blocks. It is an upper bound on what
    LRU achieves (it equals the hit ratio of an ideal static/LFU cache).
    """
    if working_set < 1:
        raise ValueError("working_set must be >= 1")
    if cache_blocks >= working_set:
        return 1.0
    if cache_blocks <= 0:
        return 0.0
    w = _zipf_weights(working_set, float(zipf_s))
    return float(w[:cache_blocks].sum() / w.sum())


def che_hit_ratio(cache_blocks: int, working_set: int, zipf_s: float) -> float:
    """LRU hit ratio under independent Zipf references (Che approximation).

    Solves sum_i (1 - exp(-p_i T)) = C for the characteristic time T and
    returns sum_i p_i (1 - exp(-p_i T)).
    """
    if working_set < 1:
        raise ValueError("working_set must be >= 1")
    if cache_blocks >= working_set:
        return 1.0
    if cache_blocks <= 0:
        return 0.0
    w = _zipf_weights(working_set, float(zipf_s))
    p = w / w.sum()

    def occupancy(t):
        return float(-np.expm1(-p * t).sum()) - cache_blocks

    hi = 1.0
    while occupancy(hi) < 0:
        hi *= 2.0
    t = brentq(occupancy, 0.0, hi, xtol=1e-12, rtol=1e-12)
    return float((p * -np.expm1(-p * t)).sum())

"""Window aggregation of per-query events into metrics snapshots.

This is the low-overhead "data miner" of the tuning loop: raw query
results are summed in an accumulator and compressed into one
:class:`MetricsSnapshot` per window of ``window_ticks`` ticks.
"""
from __future__ import annotations

from dataclasses import dataclass

from .sim import QueryResult


@dataclass
class MonitorConfig:
    window_ticks: int = 50

    def __post_init__(self):
        if self.window_ticks < 1:
            raise ValueError("window_ticks must be >= 1")


@dataclass(frozen=True)
class MetricsSnapshot:
    window_id: int
    end_tick: int
    buffer_miss_ratio: float
    active_users: int
    table_rows: int
    mean_response_ms: float
    queries: int


@dataclass
class WindowAccumulator:
    accesses: int = 0
    misses: int = 0
    response_ms: float = 0.0
    queries: int = 0
    next_window_id: int = 1


def record(acc: WindowAccumulator, result: QueryResult, blocks_touched: int) -> WindowAccumulator:
    acc.accesses += blocks_touched
    acc.misses += result.block_misses
    acc.response_ms += result.response_ms
    acc.queries += 1
    return acc


def close_window(acc: WindowAccumulator, end_tick: int, users: int, table_rows: int) -> MetricsSnapshot:
    """Emit the snapshot for the current window and reset the sums.

    Empty windows produce a zeroed snapshot rather than being skipped.
    """
    snap = MetricsSnapshot(
        window_id=acc.next_window_id,
        end_tick=end_tick,
        buffer_miss_ratio=acc.misses / acc.accesses if acc.accesses else 0.0,
        active_users=users,
        table_rows=table_rows,
        mean_response_ms=acc.response_ms / acc.queries if acc.queries else 0.0,
        queries=acc.queries,
    )
    acc.accesses = acc.misses = acc.queries = 0
    acc.response_ms = 0.0
    acc.next_window_id += 1
    return snap

"""TPC-C-like OLTP load: short skewed-read transactions over a growing table."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


@dataclass
class WorkloadSpec:
    initial_table_rows: int = 100_000
    rows_per_block: int = 64
    growth_rows_per_tick: int = 0
    zipf_s: float = 1.0
    blocks_per_query_min: int = 2
    blocks_per_query_max: int = 8
    distinct_statements: int = 200
    # (tick, user_count) steps
    user_schedule: list[tuple[int, int]] = field(default_factory=lambda: [(0, 8)])
    seed: int = 0

    def __post_init__(self):
        self.user_schedule = [(int(t), int(u)) for t, u in self.user_schedule]
        if not self.user_schedule:
            raise ValueError("user_schedule must have at least one step")
        ticks = [t for t, _ in self.user_schedule]
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise ValueError(f"user_schedule ticks must be strictly ascending, got {ticks}")
        if any(u < 1 for _, u in self.user_schedule):
            raise ValueError("user counts must be >= 1")
        if self.rows_per_block < 1 or self.distinct_statements < 1:
            raise ValueError("rows_per_block and distinct_statements must be >= 1")
        if not 1 <= self.blocks_per_query_min <= self.blocks_per_query_max:
            raise ValueError("need 1 <= blocks_per_query_min <= blocks_per_query_max")
        if self.initial_table_rows < self.rows_per_block:
            raise ValueError("initial_table_rows must fill at least one block")
        if self.growth_rows_per_tick < 0 or self.zipf_s < 0:
            raise ValueError("growth_rows_per_tick and zipf_s must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class Transaction:
    user_id: int
    blocks: tuple[int, ...]
    stmt: int


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


@lru_cache(maxsize=64)
def _zipf_cdf(n: int, s: float) -> np.ndarray:
    w = np.arange(1, n + 1, dtype=np.float64) ** -s
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    cdf[-1] = 1.0
    cdf.flags.writeable = False
    return cdf


def _zipf_indices(rng: np.random.Generator, n: int, s: float, size: int) -> np.ndarray:
    # 0-based ranks; rank 0 is the most popular.
    idx = np.searchsorted(_zipf_cdf(n, float(s)), rng.random(size), side="right")
    return np.minimum(idx, n - 1)


def zipf_sample(rng: np.random.Generator, n: int, s: float) -> int:
    """Draw i in [1, n] with probability proportional to i**-s."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return int(_zipf_indices(rng, n, s, 1)[0]) + 1


def advance_tick(spec: WorkloadSpec, clock: int) -> tuple[int, int]:
    """Table size and active user count in effect at ``clock``."""
    if clock < 0:
        raise ValueError("clock must be >= 0")
    rows = spec.initial_table_rows + spec.growth_rows_per_tick * clock
    users = spec.user_schedule[0][1]
    for tick, count in spec.user_schedule:
        if tick > clock:
            break
        users = count
    return rows, users


def table_blocks(spec: WorkloadSpec, table_rows: int) -> int:
    return math.ceil(table_rows / spec.rows_per_block)


def next_transaction(spec: WorkloadSpec, rng: np.random.Generator, table_rows: int, user_id: int) -> Transaction:
    if table_rows < spec.rows_per_block:
        raise ValueError("table_rows must fill at least one block")
    k = int(rng.integers(spec.blocks_per_query_min, spec.blocks_per_query_max + 1))
    blocks = _zipf_indices(rng, table_blocks(spec, table_rows), spec.zipf_s, k)
    stmt = int(_zipf_indices(rng, spec.distinct_statements, spec.zipf_s, 1)[0])
    return Transaction(user_id, tuple(blocks.tolist()), stmt)

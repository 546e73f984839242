# Prefetch
# PC-indexed stride prefetcher with a configurable degree and distance, and the
# near-side throttling (NST) distance controller.

import logging

from dataclasses import dataclass, field
from enum import Enum

# the timeliness partition is counted by the cache and exported from here
from sttsim.cache import (
    AccessResult, PrefetchFill, RetentionCache, Timeliness, classify_prefetch_timeliness,
)
from sttsim.errors import ConfigurationError
from sttsim.metrics import CounterSet
from sttsim.trace import TraceEvent, U64_MAX

logger = logging.getLogger("sttsim.prefetch")

PREFETCH_DISTANCES = (1, 4, 8, 16, 32)
PREFETCH_DEGREE = 4
STRIDE_TABLE_ENTRIES = 64
CONFIDENCE_MAX = 3
CONFIDENCE_THRESHOLD = 2

NST_WINDOW = 4096
NST_RAISE_LATENESS = 0.25
NST_LOWER_LATENESS = 0.05


class DistancePolicy(Enum):
    STATIC = 'static'
    RPC = 'rpc'
    NST = 'nst'


@dataclass(frozen=True)
class PrefetchConfig:
    degree : int = PREFETCH_DEGREE
    distance : int = 1
    policy : DistancePolicy = DistancePolicy.STATIC
    trigger_on_expiration_miss : bool = True

    def __post_init__(self):
        if self.degree < 1:
            raise ConfigurationError("degree", "must be at least 1")
        if self.distance not in PREFETCH_DISTANCES:
            raise ConfigurationError("distance", f"{self.distance} is not one of {PREFETCH_DISTANCES}")


@dataclass(frozen=True)
class PrefetchRequest:
    block_address : int
    trigger_pc : int
    issue_cycle : int


@dataclass
class StrideEntry:
    pc : int
    last_address : int
    stride : int = 0
    confidence : int = 0
    # block number of the furthest candidate already considered
    last_prefetch_frontier : int = None

    @property
    def is_confident(self) -> bool:
        return self.stride != 0 and self.confidence >= CONFIDENCE_THRESHOLD


@dataclass
class NstState:
    late_prefetches : int = 0
    total_prefetches : int = 0
    current_distance : int = PREFETCH_DISTANCES[0]
    evaluation_window : int = NST_WINDOW


def _step(distance : int, direction : int) -> int:
    index = PREFETCH_DISTANCES.index(distance) + direction
    index = min(max(index, 0), len(PREFETCH_DISTANCES) - 1)
    return PREFETCH_DISTANCES[index]


def nst_update(state : NstState, window_stats : CounterSet) -> int:
    """Moves the NST distance one step based on the lateness of the last window."""
    state.late_prefetches = window_stats.late_prefetches
    state.total_prefetches = window_stats.total_prefetches

    if window_stats.total_prefetches == 0:
        return state.current_distance

    lateness = window_stats.late_prefetches / window_stats.total_prefetches
    previous = state.current_distance
    if lateness > NST_RAISE_LATENESS:
        state.current_distance = _step(previous, +1)
    elif lateness < NST_LOWER_LATENESS:
        state.current_distance = _step(previous, -1)

    if state.current_distance != previous:
        logger.info(f"NST distance {previous} -> {state.current_distance} (lateness {lateness:.3f})")
    return state.current_distance


class StridePrefetcher:

    def __init__(self, config : PrefetchConfig, cache : RetentionCache, table_entries : int = STRIDE_TABLE_ENTRIES):
        self.config = config
        self.cache = cache
        self.table_entries = table_entries
        self.table : list = [None] * table_entries
        self.nst = NstState()
        self._window_accesses = 0
        self._window_start = cache.counters.copy()

    @property
    def distance(self) -> int:
        if self.config.policy is DistancePolicy.NST:
            return self.nst.current_distance
        return self.config.distance

    def reconfigure(self, config : PrefetchConfig):
        self.config = config
        self.nst = NstState()
        self._window_accesses = 0
        self._window_start = self.cache.counters.copy()

    def _entry_for(self, pc : int) -> StrideEntry:
        return self.table[(pc >> 2) % self.table_entries]

    def _train(self, event : TraceEvent) -> StrideEntry:
        slot = (event.pc >> 2) % self.table_entries
        entry = self.table[slot]
        block = event.address // self.cache.geometry.block_size

        if entry is None or entry.pc != event.pc:
            self.table[slot] = StrideEntry(event.pc, event.address, last_prefetch_frontier=block)
            return self.table[slot]

        delta = event.address - entry.last_address
        if delta != 0 and delta == entry.stride:
            entry.confidence = min(entry.confidence + 1, CONFIDENCE_MAX)
        else:
            entry.stride = delta
            entry.confidence = 1
            entry.last_prefetch_frontier = block
        entry.last_address = event.address
        return entry

    def _should_trigger(self, result : AccessResult) -> bool:
        if result.is_hit:
            return result.first_use_of_prefetch
        if result.merged_into_prefetch:
            return True
        if result.is_expiration_miss:
            return self.config.trigger_on_expiration_miss
        return True

    def _candidates(self, entry : StrideEntry, event : TraceEvent, now : int) -> list:
        block_size = self.cache.geometry.block_size
        demand_block = event.address // block_size
        if abs(entry.stride) >= block_size:
            block_stride = entry.stride // block_size if entry.stride > 0 else -((-entry.stride) // block_size)
        else:
            block_stride = 1 if entry.stride > 0 else -1

        frontier = entry.last_prefetch_frontier
        if frontier is None:
            frontier = demand_block

        requests = []
        for k in range(1, self.distance + 1):
            candidate = demand_block + k * block_stride
            if candidate < 0 or candidate * block_size > U64_MAX:
                break
            if (block_stride > 0 and candidate <= frontier) or (block_stride < 0 and candidate >= frontier):
                continue

            frontier = candidate
            address = candidate * block_size
            # expired blocks are not resident, so they are prefetched again
            if address in self.cache.mshr or self.cache.is_resident(address, now):
                continue

            requests.append(PrefetchRequest(address, event.pc, now))
            if len(requests) >= self.config.degree:
                break

        entry.last_prefetch_frontier = frontier
        return requests

    def _end_of_window(self):
        self._window_accesses += 1
        if self._window_accesses < self.nst.evaluation_window:
            return
        counters = self.cache.counters
        if self.config.policy is DistancePolicy.NST:
            nst_update(self.nst, counters - self._window_start)
        self._window_accesses = 0
        self._window_start = counters.copy()

    def observe(self, event : TraceEvent, result : AccessResult, now : int = None) -> list:
        now = event.cycle if now is None else now
        entry = self._train(event)
        self._end_of_window()

        if not entry.is_confident or not self._should_trigger(result):
            return []
        return self._candidates(entry, event, now)

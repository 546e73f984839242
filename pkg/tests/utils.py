# Utils.py
# Shared utility between tests in this package
# This can be referenced as: from tests.utils import func

from collections import OrderedDict

import numpy as np

from sttsim.cache import CacheGeometry
from sttsim.trace import AccessKind, TraceEvent, TraceSource
from sttsim.tuning import PartThresholds, TuningMode, WindowSample

# timing
# one outstanding miss at a time: every fill lands before the next event
SPACED_INTER_ARRIVAL = 101

SMALL_GEOMETRY = CacheGeometry(capacity=1024, block_size=64, associativity=4)

RETENTION_ORDER = ["STT-1ms", "STT-100us", "STT-75us", "STT-50us", "STT-25us"]


# Reference LRU cache
# Per set, an OrderedDict of tags from least to most recently used. No timing,
# no expiry; used as the oracle for an infinite-retention cache with prefetching off.

class LruOracle:

    def __init__(self, geometry : CacheGeometry):
        self.geometry = geometry
        self.sets = [OrderedDict() for _ in range(geometry.num_sets)]

    def access(self, address : int) -> bool:
        block = address // self.geometry.block_size
        ways = self.sets[block % self.geometry.num_sets]
        tag = block // self.geometry.num_sets

        if tag in ways:
            ways.move_to_end(tag)
            return True

        if len(ways) == self.geometry.associativity:
            ways.popitem(last=False)
        ways[tag] = True
        return False


def lru_oracle_outcomes(events, geometry : CacheGeometry) -> list:
    oracle = LruOracle(geometry)
    return [oracle.access(event.address) for event in events]


# Reference PART selection
# A flat loop over the window samples, indexing into the list
# instead of consuming an iterator.

def reference_part_select(samples : list, thresholds : PartThresholds):
    """Returns (retention, mode, windows used)."""
    output_retention = "STT-1ms"
    base_expired_pf = 0.0
    base_is_set = False
    i = 0
    while i < len(samples):
        all_pf = samples[i].all_pf
        expired_pf = samples[i].expired_pf
        r = samples[i].retention

        if thresholds.miss_fallback and all_pf <= thresholds.min_all_pf:
            output_retention = r
            return output_retention, TuningMode.MISS_BASED, i + 1

        if not base_is_set:
            output_retention = r
            if expired_pf > thresholds.min_expired_pf_for_base:
                base_expired_pf = expired_pf
                base_is_set = True
        else:
            if expired_pf < thresholds.growth_factor * base_expired_pf:
                output_retention = r
            else:
                return output_retention, TuningMode.EXPIRED_PF, i + 1
        i = i + 1

    return output_retention, TuningMode.EXPIRED_PF, len(samples)


def random_samples(rng : np.random.Generator, thresholds : PartThresholds) -> list:
    """Five samples whose values straddle every threshold of the selection."""
    samples = []
    all_pf_choices = [thresholds.min_all_pf / 2, thresholds.min_all_pf, thresholds.min_all_pf * 3, 0.2, 0.6]
    base = rng.choice([thresholds.min_expired_pf_for_base / 2, thresholds.min_expired_pf_for_base, 0.0003, 0.002, 0.01])
    expired = float(base)
    for label in RETENTION_ORDER:
        # mostly well above the guard so later branches are reached
        all_pf = float(rng.choice(all_pf_choices, p=[0.05, 0.05, 0.2, 0.35, 0.35]))
        samples.append(WindowSample(label, all_pf, expired, float(rng.random() * 0.1)))
        expired = float(expired * rng.choice([0.5, 1.0, 1.5, 1.99, 2.0, 3.0]))
    return samples


def sample(label : str, all_pf : float, expired_pf : float, miss_rate : float = 0.0) -> WindowSample:
    return WindowSample(label, all_pf, expired_pf, miss_rate)


# Trace helpers

def spaced_random_trace(rng : np.random.Generator, count : int, footprint_blocks : int, block_size : int = 64, write_ratio : float = 0.0, gap = SPACED_INTER_ARRIVAL) -> TraceSource:
    """Random block addresses, events `gap` cycles apart (gap may be an (low, high) range)."""
    blocks = rng.integers(0, footprint_blocks, size=count)
    offsets = rng.integers(0, block_size, size=count)
    writes = rng.random(count) < write_ratio
    if isinstance(gap, tuple):
        gaps = rng.integers(gap[0], gap[1], size=count)
    else:
        gaps = np.full(count, gap)
    cycles = np.cumsum(gaps)

    return TraceSource(
        TraceEvent(int(cycle), 0x400000 + 4 * int(pc_slot), int(block) * block_size + int(offset), AccessKind.WRITE if write else AccessKind.READ)
        for cycle, pc_slot, block, offset, write in zip(cycles, blocks % 7, blocks, offsets, writes)
    )


def events_at(*specs) -> TraceSource:
    """Builds a source from (cycle, address) or (cycle, address, kind) tuples, pc 0x400."""
    events = []
    for spec in specs:
        kind = AccessKind(spec[2]) if len(spec) > 2 else AccessKind.READ
        events.append(TraceEvent(spec[0], 0x400, spec[1], kind))
    return TraceSource(events)


def strided_revisit_trace(passes : int = 4, count : int = 256, pass_gap : int = 60000, inter_arrival : int = 100, pc : int = 0x400a10, base : int = 0x100000) -> TraceSource:
    """One strided array walked `passes` times; consecutive walks are pass_gap cycles apart."""
    events = []
    cycle = 0
    for _ in range(passes):
        for i in range(count):
            events.append(TraceEvent(cycle, pc, base + i * 64))
            cycle += inter_arrival
        cycle += pass_gap
    return TraceSource(events)

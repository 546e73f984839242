# Simulator
# Drives one cache + prefetcher + ledger along a single timeline of trace events.

import logging

from dataclasses import dataclass, field
from typing import Iterable

from sttsim.cache import (
    AccessResult, CacheGeometry, MEMORY_LATENCY_CYCLES, MSHR_ENTRIES, MigrationReport, RetentionCache,
)
from sttsim.metrics import CLOCK_HZ, CounterSet, EnergyLedger, EnergyReport, RetentionConfig
from sttsim.prefetch import PrefetchConfig, StridePrefetcher
from sttsim.trace import TraceEvent

logger = logging.getLogger("sttsim.simulator")


@dataclass(frozen=True)
class SimulationSettings:
    geometry : CacheGeometry = field(default_factory=CacheGeometry)
    memory_latency : int = MEMORY_LATENCY_CYCLES
    mshr_capacity : int = MSHR_ENTRIES
    clock_hz : int = CLOCK_HZ


@dataclass(frozen=True)
class SegmentResult:
    events : int
    counters : CounterSet
    report : EnergyReport
    expirations : tuple = ()


class Simulator:

    def __init__(self, retention : RetentionConfig, prefetch : PrefetchConfig = None, settings : SimulationSettings = None):
        self.settings = settings or SimulationSettings()
        self.counters = CounterSet()
        self.ledger = EnergyLedger(self.settings.clock_hz)
        self.cache = RetentionCache(
            self.settings.geometry,
            retention,
            memory_latency=self.settings.memory_latency,
            mshr_capacity=self.settings.mshr_capacity,
            counters=self.counters,
            ledger=self.ledger,
        )
        self.prefetcher = StridePrefetcher(prefetch, self.cache) if prefetch is not None else None
        self.prefetch_enabled = prefetch is not None
        self.now = 0
        self.migrations : list = []

    @property
    def retention(self) -> RetentionConfig:
        return self.cache.retention

    def set_prefetch(self, config : PrefetchConfig):
        """None disables prefetching; the stride table survives reconfiguration."""
        if config is None:
            self.prefetch_enabled = False
            return
        if self.prefetcher is None:
            self.prefetcher = StridePrefetcher(config, self.cache)
        else:
            self.prefetcher.reconfigure(config)
        self.prefetch_enabled = True

    def advance(self, now : int) -> list:
        now = max(now, self.now)
        # fills complete at their own ready cycle
        fills = self.cache.complete_ready(now)
        self.ledger.advance(now, self.retention)
        self.now = now
        return fills

    def step(self, event : TraceEvent) -> AccessResult:
        self.advance(event.cycle)
        result = self.cache.access(event, self.now)
        self.ledger.record_latency(result.latency_cycles)

        if self.prefetch_enabled:
            for request in self.prefetcher.observe(event, result, self.now):
                self.cache.issue_prefetch(request.block_address, request.issue_cycle)
        return result

    def run(self, events : Iterable[TraceEvent]) -> int:
        count = 0
        for event in events:
            self.step(event)
            count += 1
        return count

    def drain(self) -> list:
        return self.cache.drain_expired(self.now)

    def run_segment(self, events : Iterable[TraceEvent], drain : bool = True) -> SegmentResult:
        counters_before = self.counters.copy()
        report_before = self.ledger.snapshot()

        count = self.run(events)
        expirations = tuple(self.drain()) if drain else ()

        return SegmentResult(
            events=count,
            counters=self.counters - counters_before,
            report=self.ledger.snapshot() - report_before,
            expirations=expirations,
        )

    def switch_retention(self, retention : RetentionConfig) -> MigrationReport:
        self.advance(self.now)
        report = self.cache.switch_retention(retention, self.now)
        self.ledger.record_migration(report.cycles, report.energy_nj)
        self.migrations.append(report)
        return report

    def finish(self) -> SegmentResult:
        """Completes every outstanding request and drains expired blocks."""
        counters_before = self.counters.copy()
        report_before = self.ledger.snapshot()

        for fill in self.cache.complete_all():
            self.now = max(self.now, fill.cycle)
        expirations = tuple(self.drain())

        return SegmentResult(
            events=0,
            counters=self.counters - counters_before,
            report=self.ledger.snapshot() - report_before,
            expirations=expirations,
        )

    def report(self) -> EnergyReport:
        return self.ledger.snapshot()

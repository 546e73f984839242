# Cache core
# Set-associative L1 data cache whose blocks expire after the device retention time.
#
# Block lifecycle: Invalid -> Valid -> (Expired | evicted). An expired way keeps its tag
# until the way is reused, so a later demand to it is classified as an expiration miss
# and its refill goes back into the same way.

import logging

from dataclasses import dataclass, field, replace
from enum import Enum

from sttsim.errors import CacheInvariantError, ConfigurationError, RetentionSwitchError
from sttsim.metrics import (
    CounterSet, EnergyLedger, EventClass, MIGRATION_CYCLES, MIGRATION_ENERGY_NJ, RetentionConfig,
)
from sttsim.trace import TraceEvent

logger = logging.getLogger("sttsim.cache")

MEMORY_LATENCY_CYCLES = 100
MSHR_ENTRIES = 8


class BlockState(Enum):
    INVALID = 'invalid'
    VALID = 'valid'
    EXPIRED = 'expired'


class Origin(Enum):
    DEMAND = 'demand'
    PREFETCH = 'prefetch'


class Outcome(Enum):
    HIT = 'hit'
    MISS = 'miss'


class MissClass(Enum):
    # compulsory, capacity and conflict misses are not told apart
    NON_EXPIRATION = 'non-expiration'
    EXPIRATION = 'expiration'


class Timeliness(Enum):
    LATE = 'late'
    TIMELY = 'timely'
    UNUSED = 'unused'


def _is_power_of_two(value : int) -> bool:
    return value > 0 and value & (value - 1) == 0


@dataclass(frozen=True)
class CacheGeometry:
    capacity : int = 32 * 1024
    block_size : int = 64
    associativity : int = 4

    def __post_init__(self):
        for name in ("capacity", "block_size", "associativity"):
            if not _is_power_of_two(getattr(self, name)):
                raise ConfigurationError(name, f"{getattr(self, name)} is not a power of two")
        if self.capacity % (self.block_size * self.associativity):
            raise ConfigurationError("capacity", "must be divisible by block_size * associativity")

    @property
    def num_sets(self) -> int:
        return self.capacity // (self.block_size * self.associativity)

    def split(self, address : int):
        """Returns (block number, set index, tag)."""
        block = address // self.block_size
        return block, block % self.num_sets, block // self.num_sets

    def block_address(self, address : int) -> int:
        return address - address % self.block_size

    def address_of(self, set_index : int, tag : int) -> int:
        return (tag * self.num_sets + set_index) * self.block_size


@dataclass(frozen=True)
class PrefetchFill:
    block_address : int
    issue_cycle : int
    ready_cycle : int
    expiry_cycle : float = float('inf')
    evicted_cycle : int = None


def classify_prefetch_timeliness(fill : PrefetchFill, first_demand_use : int = None) -> Timeliness:
    if first_demand_use is None:
        return Timeliness.UNUSED
    if first_demand_use < fill.ready_cycle:
        return Timeliness.LATE

    gone = fill.expiry_cycle
    if fill.evicted_cycle is not None:
        gone = min(gone, fill.evicted_cycle)
    if first_demand_use < gone:
        return Timeliness.TIMELY
    return Timeliness.UNUSED


@dataclass
class CacheBlock:
    tag : int = 0
    state : BlockState = BlockState.INVALID
    dirty : bool = False
    # set while a prefetched block waits for its first demand use
    prefetch : PrefetchFill = None
    fill_cycle : int = 0
    expiry_cycle : float = 0
    lru_stamp : int = 0
    reloaded_expired : bool = False

    @property
    def is_valid(self) -> bool:
        return self.state is BlockState.VALID

    @property
    def prefetched(self) -> bool:
        return self.prefetch is not None


@dataclass(frozen=True)
class Expiration:
    block_address : int
    tag : int
    was_prefetched_and_unused : bool
    dirty : bool = False


@dataclass(frozen=True)
class FillReport:
    block_address : int
    origin : Origin
    cycle : int
    reinstalled_expired : bool = False
    evicted_block_address : int = None
    writeback : bool = False
    evicted_unused_prefetch : bool = False
    expirations : tuple = ()


@dataclass
class AccessResult:
    outcome : Outcome
    miss_class : MissClass
    latency_cycles : int
    block_address : int
    expirations_observed : list = field(default_factory=list)
    stall_cycles : int = 0
    merged : bool = False
    merged_into_prefetch : bool = False
    first_use_of_prefetch : bool = False

    @property
    def is_hit(self) -> bool:
        return self.outcome is Outcome.HIT

    @property
    def is_expiration_miss(self) -> bool:
        return self.miss_class is MissClass.EXPIRATION


@dataclass(frozen=True)
class MigrationReport:
    from_label : str
    to_label : str
    cycles : int
    energy_nj : object
    blocks_migrated : int
    expirations : tuple = ()


@dataclass
class MshrEntry:
    block_address : int
    origin : Origin
    issue_cycle : int
    ready_cycle : int
    dirty : bool = False
    demanded : bool = False
    # slot handed to a stalled demand; the fill is still pending
    released : bool = False


class Mshr:
    """Outstanding misses and prefetches, one entry per block address."""

    def __init__(self, capacity : int = MSHR_ENTRIES):
        if capacity < 1:
            raise ConfigurationError("mshr_capacity", "must be at least 1")
        self.capacity = capacity
        self.entries : dict = {}

    def __contains__(self, block_address) -> bool:
        return block_address in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, block_address) -> MshrEntry:
        return self.entries.get(block_address)

    def occupied(self) -> list:
        return [e for e in self.entries.values() if not e.released]

    def is_full(self) -> bool:
        return len(self.occupied()) >= self.capacity

    def allocate(self, entry : MshrEntry):
        if entry.block_address in self.entries:
            raise CacheInvariantError(f"duplicate MSHR entry for {entry.block_address:#x}")
        if self.is_full():
            raise CacheInvariantError("MSHR allocation while full")
        self.entries[entry.block_address] = entry

    def retire(self, block_address) -> MshrEntry:
        return self.entries.pop(block_address, None)

    def outstanding(self) -> list:
        return sorted(self.entries.values(), key=lambda e: (e.ready_cycle, e.block_address))

    def ready(self, now : int) -> list:
        return [e for e in self.outstanding() if e.ready_cycle <= now]

    def earliest(self) -> MshrEntry:
        """The occupied entry that frees its slot first."""
        return min(self.occupied(), key=lambda e: (e.ready_cycle, e.block_address))

    def release(self, entry : MshrEntry):
        entry.released = True


class RetentionCache:

    def __init__(
        self,
        geometry : CacheGeometry,
        retention : RetentionConfig,
        memory_latency : int = MEMORY_LATENCY_CYCLES,
        mshr_capacity : int = MSHR_ENTRIES,
        counters : CounterSet = None,
        ledger : EnergyLedger = None,
    ):
        if memory_latency < 0:
            raise ConfigurationError("memory_latency", "must not be negative")
        self.geometry = geometry
        self.retention = retention
        self.memory_latency = memory_latency
        self.mshr = Mshr(mshr_capacity)
        self.counters = counters if counters is not None else CounterSet()
        self.ledger = ledger if ledger is not None else EnergyLedger()
        self.sets = [
            [CacheBlock() for _ in range(geometry.associativity)]
            for _ in range(geometry.num_sets)
        ]
        self._stamp = 0

    # helpers

    def _touch(self, way : CacheBlock):
        self._stamp += 1
        way.lru_stamp = self._stamp

    @staticmethod
    def _find(ways : list, tag : int) -> CacheBlock:
        for way in ways:
            if way.state is not BlockState.INVALID and way.tag == tag:
                return way
        return None

    def _writeback(self):
        self.counters.writebacks += 1
        self.ledger.record(EventClass.WRITEBACK, self.retention)

    def _settle_prefetch(self, fill : PrefetchFill, first_demand_use : int = None) -> Timeliness:
        """Counts a late or timely first use; unused prefetches are counted by the caller."""
        timeliness = classify_prefetch_timeliness(fill, first_demand_use)
        if timeliness is Timeliness.LATE:
            self.counters.late_prefetches += 1
        elif timeliness is Timeliness.TIMELY:
            self.counters.timely_prefetches += 1
        return timeliness

    def _expire_set(self, set_index : int, now : int) -> list:
        expired = []
        for way in self.sets[set_index]:
            if way.state is not BlockState.VALID or way.expiry_cycle > now:
                continue

            unused = way.prefetched and self._settle_prefetch(way.prefetch) is Timeliness.UNUSED
            dirty = way.dirty
            way.state = BlockState.EXPIRED
            way.prefetch = None
            way.reloaded_expired = False
            self.counters.expired_blocks += 1
            if unused:
                self.counters.expired_unused_prefetches += 1
            if dirty:
                # data would be lost at expiry, so it is written back when detected
                self._writeback()
                way.dirty = False

            expired.append(Expiration(self.geometry.address_of(set_index, way.tag), way.tag, unused, dirty))
        return expired

    def lookup(self, address : int) -> CacheBlock:
        _, set_index, tag = self.geometry.split(address)
        return self._find(self.sets[set_index], tag)

    def is_resident(self, address : int, now : int) -> bool:
        way = self.lookup(address)
        return way is not None and way.is_valid and way.expiry_cycle > now

    # operations

    def access(self, event : TraceEvent, now : int) -> AccessResult:
        _, set_index, tag = self.geometry.split(event.address)
        block_address = self.geometry.block_address(event.address)
        ways = self.sets[set_index]

        expirations = self._expire_set(set_index, now)
        self.counters.demand_accesses += 1

        way = self._find(ways, tag)
        if way is not None and way.is_valid:
            self.counters.demand_hits += 1
            self._touch(way)

            first_use = way.prefetched
            if first_use:
                self._settle_prefetch(way.prefetch, now)
                way.prefetch = None
                if way.reloaded_expired:
                    self.counters.prefetchable_expired_reloads += 1
                    way.reloaded_expired = False

            if event.is_write:
                way.dirty = True
                self.ledger.record(EventClass.WRITE_HIT, self.retention)
                latency = self.retention.write_latency_cycles
            else:
                self.ledger.record(EventClass.READ_HIT, self.retention)
                latency = self.retention.hit_latency_cycles

            return AccessResult(
                Outcome.HIT, None, latency, block_address,
                expirations_observed=expirations, first_use_of_prefetch=first_use,
            )

        miss_class = MissClass.NON_EXPIRATION
        if way is not None:
            # present but expired
            miss_class = MissClass.EXPIRATION
            self.counters.expiration_misses += 1
            self._touch(way)
        self.counters.demand_misses += 1

        result = AccessResult(Outcome.MISS, miss_class, 0, block_address, expirations_observed=expirations)

        entry = self.mshr.get(block_address)
        if entry is not None:
            self.counters.mshr_merges += 1
            result.merged = True
            result.merged_into_prefetch = entry.origin is Origin.PREFETCH
            if result.merged_into_prefetch and not entry.demanded:
                self._settle_prefetch(PrefetchFill(block_address, entry.issue_cycle, entry.ready_cycle), now)
            entry.demanded = True
            entry.dirty = entry.dirty or event.is_write
            result.latency_cycles = max(0, entry.ready_cycle - now)
            return result

        stall = 0
        if self.mshr.is_full():
            earliest = self.mshr.earliest()
            stall = max(0, earliest.ready_cycle - now)
            self.counters.mshr_stalls += 1
            self.mshr.release(earliest)

        start = now + stall
        self.mshr.allocate(MshrEntry(
            block_address, Origin.DEMAND, start, start + self.memory_latency,
            dirty=event.is_write, demanded=True,
        ))
        self.counters.total_mshr_requests += 1
        result.stall_cycles = stall
        result.latency_cycles = stall + self.memory_latency
        return result

    def issue_prefetch(self, block_address : int, now : int) -> bool:
        """Allocates a prefetch MSHR entry; returns False when filtered or dropped."""
        block_address = self.geometry.block_address(block_address)
        if block_address in self.mshr or self.is_resident(block_address, now):
            return False
        if self.mshr.is_full():
            self.counters.prefetches_dropped += 1
            return False

        self.mshr.allocate(MshrEntry(block_address, Origin.PREFETCH, now, now + self.memory_latency))
        self.counters.total_prefetches += 1
        self.counters.total_mshr_requests += 1
        return True

    def fill(self, block_address : int, origin : Origin, now : int) -> FillReport:
        entry = self.mshr.get(block_address)
        if entry is None:
            raise CacheInvariantError(f"fill of {block_address:#x} without an MSHR entry")
        if entry.ready_cycle > now:
            raise CacheInvariantError(f"fill of {block_address:#x} before its ready cycle")
        self.mshr.retire(block_address)

        _, set_index, tag = self.geometry.split(block_address)
        ways = self.sets[set_index]
        expirations = tuple(self._expire_set(set_index, now))

        target = self._find(ways, tag)
        if target is not None and target.is_valid:
            raise CacheInvariantError(f"fill of {block_address:#x} while the block is valid")

        reinstalled = target is not None
        evicted_address = None
        writeback = False
        evicted_unused = False
        if target is None:
            empty = [way for way in ways if way.state is BlockState.INVALID]
            target = empty[0] if empty else min(ways, key=lambda way: way.lru_stamp)
            if target.is_valid:
                evicted_address = self.geometry.address_of(set_index, target.tag)
                self.counters.evictions += 1
                if target.dirty:
                    self._writeback()
                    writeback = True
                if target.prefetched and self._settle_prefetch(replace(target.prefetch, evicted_cycle=now)) is Timeliness.UNUSED:
                    self.counters.evicted_unused_prefetches += 1
                    evicted_unused = True

        prefetched = origin is Origin.PREFETCH and not entry.demanded
        target.tag = tag
        target.state = BlockState.VALID
        target.dirty = entry.dirty
        target.reloaded_expired = prefetched and reinstalled
        target.fill_cycle = now
        target.expiry_cycle = self.retention.expiry_after(now)
        target.prefetch = PrefetchFill(block_address, entry.issue_cycle, now, target.expiry_cycle) if prefetched else None
        self._touch(target)

        self.counters.fills += 1
        if origin is Origin.PREFETCH:
            self.counters.prefetch_fills += 1
        self.ledger.record(EventClass.FILL, self.retention)

        return FillReport(
            block_address, origin, now,
            reinstalled_expired=reinstalled,
            evicted_block_address=evicted_address,
            writeback=writeback,
            evicted_unused_prefetch=evicted_unused,
            expirations=expirations,
        )

    def _complete(self, entries : list) -> list:
        fills = []
        for entry in entries:
            # leakage accrues piecewise up to each fill
            self.ledger.advance(entry.ready_cycle, self.retention)
            fills.append(self.fill(entry.block_address, entry.origin, entry.ready_cycle))
        return fills

    def complete_ready(self, now : int) -> list:
        """Fills every outstanding entry whose ready cycle has passed, in ready order."""
        return self._complete(self.mshr.ready(now))

    def complete_all(self) -> list:
        return self._complete(self.mshr.outstanding())

    def drain_expired(self, now : int) -> list:
        expired = []
        for set_index in range(self.geometry.num_sets):
            expired.extend(self._expire_set(set_index, now))
        return expired

    def switch_retention(self, new : RetentionConfig, now : int) -> MigrationReport:
        if new == self.retention:
            raise RetentionSwitchError(f"cache already runs at {new.label}")

        expirations = tuple(self.drain_expired(now))
        migrated = 0
        for ways in self.sets:
            for way in ways:
                if way.is_valid:
                    way.fill_cycle = now
                    way.expiry_cycle = new.expiry_after(now)
                    if way.prefetched:
                        way.prefetch = replace(way.prefetch, expiry_cycle=way.expiry_cycle)
                    migrated += 1

        old = self.retention
        self.retention = new
        logger.info(f"Switched retention {old.label} -> {new.label} at cycle {now}, {migrated} blocks migrated")
        return MigrationReport(old.label, new.label, MIGRATION_CYCLES, MIGRATION_ENERGY_NJ, migrated, expirations)

    # checks

    def valid_blocks(self) -> int:
        return sum(1 for ways in self.sets for way in ways if way.is_valid)

    def resident_unused_prefetches(self) -> int:
        return sum(1 for ways in self.sets for way in ways if way.is_valid and way.prefetched)

    def invariant_violations(self) -> list:
        problems = []
        for set_index, ways in enumerate(self.sets):
            if len(ways) > self.geometry.associativity:
                problems.append(f"set {set_index} holds more than {self.geometry.associativity} ways")
            tags = [way.tag for way in ways if way.state is not BlockState.INVALID]
            if len(tags) != len(set(tags)):
                problems.append(f"set {set_index} holds a duplicated tag")

        c = self.counters
        if c.fills + len(self.mshr) != c.demand_misses - c.mshr_merges + c.total_prefetches:
            problems.append("fills do not balance demand misses and issued prefetches")
        if c.evictions + c.expired_blocks + self.valid_blocks() != c.fills:
            problems.append("evictions + expirations + valid blocks differ from fills")
        return problems + c.violations()

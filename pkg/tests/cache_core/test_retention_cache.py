from decimal import Decimal

import pytest
import pytest_bdd

from sttsim.cache import BlockState, CacheGeometry, MissClass, Origin, RetentionCache
from sttsim.errors import CacheInvariantError, ConfigurationError, RetentionSwitchError
from sttsim.metrics import retention_config
from sttsim.simulator import SimulationSettings
from sttsim.trace import AccessKind, TraceEvent
from tests.cache_core.conftest import make_simulator, read
from tests.utils import SMALL_GEOMETRY


@pytest_bdd.scenario("cache_core.feature", "A cold read misses and schedules a fill")
def test_cold_read_misses():
    pass


@pytest_bdd.scenario("cache_core.feature", "A block read again within its retention hits")
def test_read_within_retention_hits():
    pass


@pytest_bdd.scenario("cache_core.feature", "A block read again after its retention is an expiration miss")
def test_read_after_retention_is_an_expiration_miss():
    pass


@pytest_bdd.scenario("cache_core.feature", "A demand read of a prefetched block clears its prefetched flag")
def test_demand_read_clears_prefetched_flag():
    pass


@pytest_bdd.scenario("cache_core.feature", "An unused prefetch that expires is counted")
def test_unused_prefetch_expiry_is_counted():
    pass


@pytest_bdd.scenario("cache_core.feature", "A demand-filled block that expires is not an unused prefetch")
def test_demand_block_expiry_is_not_an_unused_prefetch():
    pass


@pytest_bdd.scenario("cache_core.feature", "Switching retention with an empty cache")
def test_switch_with_empty_cache():
    pass


@pytest_bdd.when(pytest_bdd.parsers.parse("block {address} is prefetched at cycle {cycle:d}"))
def when_block_is_prefetched(cache_data, address, cycle):
    simulator = cache_data["simulator"]
    simulator.advance(cycle)
    assert simulator.cache.issue_prefetch(int(address, 16), simulator.now)


@pytest_bdd.when(pytest_bdd.parsers.parse("the cache is drained at cycle {cycle:d}"))
def when_the_cache_is_drained(cache_data, cycle):
    simulator = cache_data["simulator"]
    simulator.advance(cycle)
    cache_data["expirations"] = simulator.drain()


@pytest_bdd.when(pytest_bdd.parsers.parse("the cache switches to {label}"))
def when_the_cache_switches(cache_data, label):
    cache_data["migration"] = cache_data["simulator"].switch_retention(retention_config(label))


@pytest_bdd.then("the access is a non-expiration miss")
def then_non_expiration_miss(cache_data):
    result = cache_data["result"]
    assert not result.is_hit
    assert result.miss_class is MissClass.NON_EXPIRATION


@pytest_bdd.then("the access is an expiration miss")
def then_expiration_miss(cache_data):
    result = cache_data["result"]
    assert not result.is_hit
    assert result.is_expiration_miss
    assert cache_data["simulator"].counters.expiration_misses == 1


@pytest_bdd.then(pytest_bdd.parsers.parse("the access is a hit with latency {latency:d}"))
def then_hit_with_latency(cache_data, latency):
    result = cache_data["result"]
    assert result.is_hit
    assert result.miss_class is None
    assert result.latency_cycles == latency


@pytest_bdd.then(pytest_bdd.parsers.parse("{count:d} MSHR entry is outstanding"))
def then_mshr_entries(cache_data, count):
    assert len(cache_data["simulator"].cache.mshr) == count


@pytest_bdd.then(pytest_bdd.parsers.parse("the block at {address} is not marked prefetched"))
def then_not_prefetched(cache_data, address):
    assert cache_data["result"].first_use_of_prefetch
    assert not cache_data["simulator"].cache.lookup(int(address, 16)).prefetched


@pytest_bdd.then(pytest_bdd.parsers.parse("{count:d} expiration is reported as an unused prefetch"))
@pytest_bdd.then(pytest_bdd.parsers.parse("{count:d} expirations are reported as an unused prefetch"))
def then_expirations_reported(cache_data, count):
    expirations = cache_data["expirations"]
    assert len(expirations) == 1
    assert sum(1 for e in expirations if e.was_prefetched_and_unused) == count


@pytest_bdd.then(pytest_bdd.parsers.parse("expired_unused_prefetches is {count:d}"))
def then_expired_unused_prefetches(cache_data, count):
    assert cache_data["simulator"].counters.expired_unused_prefetches == count


@pytest_bdd.then(pytest_bdd.parsers.parse("the migration charged {cycles:d} cycles and {energy} nJ"))
def then_migration_charged(cache_data, cycles, energy):
    simulator = cache_data["simulator"]
    report = simulator.report()
    assert report.total_latency_cycles == cycles
    assert report.migration_nj == Decimal(energy)
    assert cache_data["migration"].cycles == cycles


@pytest_bdd.then(pytest_bdd.parsers.parse("{count:d} blocks were migrated"))
def then_blocks_migrated(cache_data, count):
    assert cache_data["migration"].blocks_migrated == count


# set 0 of the small geometry holds blocks 0, 4, 8, ...
SET0 = [0, 256, 512, 768, 1024]


def test_full_set_evicts_the_lru_way():
    simulator = make_simulator("SRAM", SimulationSettings(geometry=SMALL_GEOMETRY))
    for i, address in enumerate(SET0[:4]):
        read(simulator, i * 200, address)
    read(simulator, 1000, 0)
    read(simulator, 1200, SET0[4])
    simulator.finish()

    assert simulator.counters.evictions == 1
    assert simulator.cache.lookup(256) is None
    assert simulator.cache.lookup(0).is_valid


def test_dirty_victim_is_written_back():
    simulator = make_simulator("SRAM", SimulationSettings(geometry=SMALL_GEOMETRY))
    read(simulator, 0, 0, AccessKind.WRITE)
    for i, address in enumerate(SET0[1:], start=1):
        read(simulator, i * 200, address)
    simulator.finish()

    assert simulator.counters.writebacks == 1
    assert simulator.cache.lookup(0) is None


def test_dirty_expiry_is_written_back():
    simulator = make_simulator("STT-25us")
    read(simulator, 0, 0x1000, AccessKind.WRITE)
    simulator.advance(60000)
    expirations = simulator.drain()

    assert expirations[0].dirty
    assert simulator.counters.writebacks == 1


def test_expiry_boundary_is_inclusive():
    just_before = make_simulator("STT-25us")
    read(just_before, 0, 0x1000)
    assert read(just_before, 50099, 0x1000).is_hit

    at_expiry = make_simulator("STT-25us")
    read(at_expiry, 0, 0x1000)
    assert read(at_expiry, 50100, 0x1000).is_expiration_miss


def test_writes_do_not_extend_retention():
    simulator = make_simulator("STT-25us")
    read(simulator, 0, 0x1000)
    write = read(simulator, 30000, 0x1000, AccessKind.WRITE)
    later = read(simulator, 50100, 0x1000)

    assert write.is_hit and write.latency_cycles == 2
    assert later.is_expiration_miss


def test_expired_block_refills_into_its_own_way():
    simulator = make_simulator("STT-25us", SimulationSettings(geometry=SMALL_GEOMETRY))
    for i, address in enumerate(SET0[:4]):
        read(simulator, i * 200, address)
    way = simulator.cache.lookup(512)
    read(simulator, 60000, 512)
    simulator.advance(60200)

    assert simulator.cache.lookup(512) is way
    assert way.state is BlockState.VALID
    assert simulator.counters.evictions == 0


def test_sram_never_expires():
    simulator = make_simulator("SRAM")
    read(simulator, 0, 0x1000)
    result = read(simulator, 10 ** 9, 0x1000)

    assert result.is_hit
    assert result.latency_cycles == 2


def test_merge_into_outstanding_demand():
    simulator = make_simulator("STT-1ms")
    read(simulator, 0, 0x1000)
    merged = read(simulator, 40, 0x1010)

    assert merged.merged and not merged.merged_into_prefetch
    assert merged.latency_cycles == 60
    assert simulator.counters.demand_misses == 2
    assert simulator.counters.mshr_merges == 1
    assert simulator.counters.total_mshr_requests == 1


def test_merge_into_prefetch_is_late():
    simulator = make_simulator("STT-1ms")
    simulator.cache.issue_prefetch(0x2000, 0)
    merged = read(simulator, 30, 0x2000)
    simulator.finish()

    assert merged.merged_into_prefetch
    assert merged.latency_cycles == 70
    assert simulator.counters.late_prefetches == 1
    # a demanded prefetch is not left marked as unused
    assert not simulator.cache.lookup(0x2000).prefetched


def test_full_mshr_stalls_a_demand():
    simulator = make_simulator("STT-1ms", SimulationSettings(mshr_capacity=2))
    read(simulator, 0, 0x1000)
    read(simulator, 1, 0x2000)
    stalled = read(simulator, 2, 0x3000)

    assert stalled.stall_cycles == 98
    assert stalled.latency_cycles == 198
    assert simulator.counters.mshr_stalls == 1

    # the block holding the slot still fills at its own ready cycle
    assert simulator.cache.lookup(0x1000) is None
    simulator.advance(100)
    assert simulator.cache.lookup(0x1000).is_valid
    assert simulator.counters.fills == 1


def test_stall_does_not_expire_blocks_ahead_of_time():
    simulator = make_simulator("STT-25us", SimulationSettings(geometry=SMALL_GEOMETRY, mshr_capacity=1))
    read(simulator, 0, 0x1000)
    # same set as 0x1000, still in flight when the next read arrives
    read(simulator, 50000, 0x1100)
    stalled = read(simulator, 50001, 0x1200)
    revisit = read(simulator, 50002, 0x1000)

    assert stalled.stall_cycles == 99
    assert stalled.latency_cycles == 199
    # 0x1000 was filled at cycle 100 and holds its data until 50100
    assert revisit.is_hit
    assert simulator.counters.expiration_misses == 0

    simulator.advance(50100)
    assert simulator.cache.lookup(0x1000).state is BlockState.EXPIRED
    assert simulator.cache.lookup(0x1100).is_valid

    simulator.finish()
    assert simulator.cache.invariant_violations() == []
    assert simulator.counters.fills == 3


def test_full_mshr_drops_a_prefetch():
    simulator = make_simulator("STT-1ms", SimulationSettings(mshr_capacity=1))
    read(simulator, 0, 0x1000)

    assert not simulator.cache.issue_prefetch(0x2000, 0)
    assert simulator.counters.prefetches_dropped == 1
    assert simulator.counters.total_prefetches == 0


def test_resident_blocks_are_not_prefetched():
    simulator = make_simulator("STT-1ms")
    read(simulator, 0, 0x1000)
    simulator.advance(200)

    assert not simulator.cache.issue_prefetch(0x1000, 200)
    assert simulator.counters.total_prefetches == 0


def test_fill_without_mshr_entry_is_a_program_error():
    cache = RetentionCache(CacheGeometry(), retention_config("STT-1ms"))

    with pytest.raises(CacheInvariantError):
        cache.fill(0x1000, Origin.DEMAND, 100)


def test_fill_before_ready_is_a_program_error():
    cache = RetentionCache(CacheGeometry(), retention_config("STT-1ms"))
    cache.access(TraceEvent(0, 0x400, 0x1000), 0)

    with pytest.raises(CacheInvariantError):
        cache.fill(0x1000, Origin.DEMAND, 50)


def test_switch_to_the_same_retention_is_rejected():
    simulator = make_simulator("STT-1ms")

    with pytest.raises(RetentionSwitchError):
        simulator.switch_retention(retention_config("STT-1ms"))


def test_switch_retimes_valid_blocks():
    simulator = make_simulator("STT-25us")
    read(simulator, 0, 0x1000)
    simulator.advance(40000)
    migration = simulator.switch_retention(retention_config("STT-1ms"))

    assert migration.blocks_migrated == 1
    assert read(simulator, 60000, 0x1000).is_hit


def test_switch_drains_blocks_that_already_expired():
    simulator = make_simulator("STT-25us")
    read(simulator, 0, 0x1000)
    simulator.advance(70000)
    migration = simulator.switch_retention(retention_config("STT-1ms"))

    assert migration.blocks_migrated == 0
    assert len(migration.expirations) == 1
    assert read(simulator, 80000, 0x1000).is_expiration_miss


def test_drain_of_an_empty_cache():
    assert make_simulator("STT-25us").drain() == []


@pytest.mark.parametrize("capacity, block_size, associativity", [
    (3000, 64, 4),
    (32 * 1024, 48, 4),
    (32 * 1024, 64, 3),
    (128, 64, 4),
])
def test_geometry_must_be_powers_of_two(capacity, block_size, associativity):
    with pytest.raises(ConfigurationError):
        CacheGeometry(capacity, block_size, associativity)


def test_address_decomposition():
    geometry = CacheGeometry()
    block, set_index, tag = geometry.split(0x12345)

    assert geometry.num_sets == 128
    assert block == 0x12345 // 64
    assert geometry.address_of(set_index, tag) == geometry.block_address(0x12345) == 0x12340

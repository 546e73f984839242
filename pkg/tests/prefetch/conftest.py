import pytest
import pytest_bdd

from sttsim.metrics import retention_config
from sttsim.prefetch import PrefetchConfig
from sttsim.simulator import Simulator
from sttsim.trace import TraceEvent

BLOCK = 64
STREAM_BASE = 0x40000


@pytest.fixture(scope="function")
def prefetch_data():
    return {}


def observe_step(simulator : Simulator, event : TraceEvent) -> list:
    """Simulator.step, returning the prefetch requests the event produced."""
    simulator.advance(event.cycle)
    result = simulator.cache.access(event, simulator.now)
    simulator.ledger.record_latency(result.latency_cycles)
    requests = simulator.prefetcher.observe(event, result, simulator.now) if simulator.prefetch_enabled else []
    for request in requests:
        simulator.cache.issue_prefetch(request.block_address, request.issue_cycle)
    return requests


def stream_blocks(requests : list) -> list:
    return [(r.block_address - STREAM_BASE) // BLOCK for r in requests]


@pytest_bdd.given(pytest_bdd.parsers.parse("an {label} cache with a degree {degree:d} distance {distance:d} prefetcher"))
def given_a_prefetching_cache(prefetch_data, label, degree, distance):
    prefetch_data["config"] = PrefetchConfig(degree=degree, distance=distance)
    prefetch_data["simulator"] = Simulator(retention_config(label), prefetch_data["config"])


@pytest_bdd.given(pytest_bdd.parsers.parse("an {label} cache with a degree {degree:d} distance {distance:d} prefetcher that ignores expiration misses"))
def given_a_prefetching_cache_without_trigger(prefetch_data, label, degree, distance):
    prefetch_data["config"] = PrefetchConfig(degree=degree, distance=distance, trigger_on_expiration_miss=False)
    prefetch_data["simulator"] = Simulator(retention_config(label), prefetch_data["config"])


@pytest_bdd.when(pytest_bdd.parsers.parse("pc {pc} reads blocks {first:d}, {second:d} and {third:d}"))
def when_pc_reads_blocks(prefetch_data, pc, first, second, third):
    simulator = prefetch_data["simulator"]
    start = simulator.now + 200
    requests = []
    for i, block in enumerate([first, second, third]):
        requests = observe_step(simulator, TraceEvent(start + 200 * i, int(pc, 16), STREAM_BASE + block * BLOCK))
    prefetch_data["requests"] = requests

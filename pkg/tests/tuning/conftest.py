import pytest
import pytest_bdd

from sttsim.trace import TraceEvent, TraceSource

from tests.utils import RETENTION_ORDER


@pytest.fixture(scope="function")
def tuning_data():
    return {}


def fractions(text : str) -> list:
    return [float(value) for value in text.split(",")]


def single_block_trace(count : int, inter_arrival : int = 100) -> TraceSource:
    """Reads of one address: the stride never becomes confident, so nothing is prefetched."""
    return TraceSource(TraceEvent(i * inter_arrival, 0x400, 0x8000) for i in range(count))


def rotating_blocks_trace(count : int, blocks : int = 4, inter_arrival : int = 100) -> TraceSource:
    return TraceSource(TraceEvent(i * inter_arrival, 0x400, 64 * (i % blocks)) for i in range(count))


@pytest_bdd.given(pytest_bdd.parsers.parse('miss rates "{rates}" from the longest retention to the shortest'))
def given_miss_rates(tuning_data, rates):
    tuning_data["rates"] = list(zip(RETENTION_ORDER, fractions(rates)))

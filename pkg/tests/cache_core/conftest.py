import pytest
import pytest_bdd

from sttsim.metrics import retention_config
from sttsim.simulator import SimulationSettings, Simulator
from sttsim.trace import AccessKind, TraceEvent


@pytest.fixture(scope="function")
def cache_data():
    return {}


def make_simulator(label : str, settings : SimulationSettings = None) -> Simulator:
    return Simulator(retention_config(label), None, settings)


def read(simulator : Simulator, cycle : int, address : int, kind : AccessKind = AccessKind.READ):
    return simulator.step(TraceEvent(cycle, 0x400, address, kind))


@pytest_bdd.given(pytest_bdd.parsers.parse("an {label} cache"))
def given_a_cache(cache_data, label):
    cache_data["simulator"] = make_simulator(label)


@pytest_bdd.when(pytest_bdd.parsers.parse("address {address} is read at cycle {cycle:d}"))
def when_address_is_read(cache_data, address, cycle):
    cache_data["result"] = read(cache_data["simulator"], cycle, int(address, 16))

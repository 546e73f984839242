import pytest
import pytest_bdd

from sttsim.metrics import EnergyLedger, retention_config


@pytest.fixture(scope="function")
def energy_data():
    return {}


@pytest_bdd.given(pytest_bdd.parsers.parse("an {label} energy ledger"))
def given_an_energy_ledger(energy_data, label):
    energy_data["retention"] = retention_config(label)
    energy_data["ledger"] = EnergyLedger()

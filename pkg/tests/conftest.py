import pytest
import html

from dotenv import load_dotenv

from sttsim.metrics import EnergyReport

# Load environment variables
load_dotenv()

# Store simulation results during test runs
_sim_results = {}
_scenario_names = {}
_test_params = {}


def save_sim_result(request, report : EnergyReport, **details):
    """Attaches an energy/latency summary (plus any decision details) to the JSON report."""
    summary = {key: str(value) for key, value in report.summary().items()}
    summary.update({key: str(value) for key, value in details.items()})
    _sim_results[request.node.name] = summary


def pytest_bdd_after_scenario(request, feature, scenario):
    _scenario_names[request.node.name] = {
        "feature": feature.name,
        "scenario": scenario.name,
        "scenario_description": scenario.description,
    }


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    if hasattr(item, "callspec"):
        _test_params[item.name] = {key: str(value) for key, value in item.callspec.params.items()}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()

    # Attach simulation data to the report if available
    if call.when == "call" and item.name in _sim_results:
        report.simulation = _sim_results[item.name]


@pytest.hookimpl(optionalhook=True)
def pytest_json_modifyreport(json_report):
    """Add simulation summaries directly into the JSON report"""
    for test in json_report.get("tests", []):
        test_name = test["nodeid"].split("::")[-1]
        if test_name in _sim_results:
            test["simulation"] = _sim_results[test_name]

        if test_name in _scenario_names:
            test["feature"] = _scenario_names[test_name]["feature"]
            test["scenario"] = _scenario_names[test_name]["scenario"]
            test["scenario_description"] = _scenario_names[test_name]["scenario_description"]

        test["params"] = _test_params.get(test_name, {})


def pytest_html_results_table_header(cells):
    cells.insert(2, '<th class="sortable" data-column-type="energy">Energy (nJ)</th>')


def pytest_html_results_table_row(report, cells):
    # Only simulation tests carry a summary; the cell text is escaped before it reaches the HTML
    summary = getattr(report, "simulation", None) or {}
    energy = html.escape(summary.get("energy_nj", ""), quote=True)
    cells.insert(2, f'<td class="col-energy">{energy}</td>')

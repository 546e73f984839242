import pytest
import pytest_bdd

from sttsim.errors import TraceError
from sttsim.trace import TraceFormat, load_trace


@pytest.fixture(scope="function")
def trace_data():
    return {}


@pytest_bdd.when("the text trace is loaded")
def when_the_text_trace_is_loaded(trace_data):
    try:
        trace_data["source"] = load_trace(trace_data["path"], TraceFormat.TEXT)
    except TraceError as e:
        trace_data["error"] = e


@pytest_bdd.when("the binary trace is loaded")
def when_the_binary_trace_is_loaded(trace_data):
    try:
        trace_data["source"] = load_trace(trace_data["path"], TraceFormat.BINARY)
    except TraceError as e:
        trace_data["error"] = e


@pytest_bdd.then(pytest_bdd.parsers.parse("the loaded trace holds {count:d} events"))
def then_the_loaded_trace_holds(trace_data, count):
    assert "error" not in trace_data
    assert len(trace_data["source"]) == count

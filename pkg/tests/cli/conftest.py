import csv
import os
import shlex

import pytest
import pytest_bdd

from sttsim.cli import main
from sttsim.trace import write_trace, gen_strided


@pytest.fixture(autouse=True)
def isolated_environment(monkeypatch):
    for key in list(os.environ):
        if key.startswith("STTSIM_"):
            monkeypatch.delenv(key)


@pytest.fixture(scope="function")
def cli_data(tmp_path):
    return {"out": str(tmp_path / "out"), "tmp": tmp_path}


def strided_trace_file(directory, count : int, name : str = "strided.txt") -> str:
    path = str(directory / name)
    write_trace(gen_strided(pc=0x400a10, base=0x10000, stride=64, count=count, inter_arrival=100), path)
    return path


def run_cli(*args) -> int:
    return main([str(arg) for arg in args])


def csv_rows(path) -> list:
    with open(path, newline='') as csv_file:
        return list(csv.DictReader(csv_file))


@pytest_bdd.given(pytest_bdd.parsers.parse("a strided trace file of {count:d} events"))
def given_a_strided_trace_file(cli_data, count):
    cli_data["trace"] = strided_trace_file(cli_data["tmp"], count)


@pytest_bdd.when(pytest_bdd.parsers.parse('sttsim is called with "{command}"'))
def when_sttsim_is_called(cli_data, capsys, command):
    command = command.replace("{trace}", cli_data.get("trace", "")).replace("{out}", cli_data["out"])
    cli_data["exit_code"] = main(shlex.split(command))
    cli_data["stdout"], cli_data["stderr"] = capsys.readouterr()


@pytest_bdd.then(pytest_bdd.parsers.parse("the exit code is {code:d}"))
def then_the_exit_code_is(cli_data, code):
    assert cli_data["exit_code"] == code, cli_data["stderr"]


@pytest_bdd.then(pytest_bdd.parsers.parse("{name} holds {count:d} rows"))
def then_the_file_holds_rows(cli_data, name, count):
    assert len(csv_rows(os.path.join(cli_data["out"], name))) == count


@pytest_bdd.then(pytest_bdd.parsers.parse("{name} exists"))
def then_the_file_exists(cli_data, name):
    assert os.path.exists(os.path.join(cli_data["out"], name))

"""Shared fixtures and the acceptance-summary hook."""

import time

import pytest

from wirelesscbc.cli import main as cli_main
from wirelesscbc.config import RunConfig, default_motor_config

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): acceptance criterion")
    config.addinivalue_line("markers", "slow: runs for more than a few seconds")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = getattr(item, "acceptance_detail", "")
        _ACCEPTANCE[name] = (rep.outcome == "passed", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in sorted(_ACCEPTANCE.items()):
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        terminalreporter.write_line(f"{line}  ({detail})" if detail else line)


@pytest.fixture(scope="session")
def motor_certify(tmp_path_factory):
    """One default ``certify`` run of the motor case, with its wall time."""
    out = tmp_path_factory.mktemp("certify_a")
    start = time.perf_counter()
    code = cli_main(["certify", "--out", str(out)])
    elapsed = time.perf_counter() - start
    cfg = RunConfig.from_dict(default_motor_config())
    return {"code": code, "out": out, "elapsed": elapsed, "config": cfg}

import json
import sys
from pathlib import Path

import pytest
from hypothesis import settings

# fixed example streams keep the suite reproducible run to run
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

TESTS = Path(__file__).resolve().parent
FIXTURES = TESTS / "fixtures"
sys.path.insert(0, str(TESTS))

# criterion label -> "PASS" / "FAIL" / "SKIP", filled by test_acceptance.py
ACCEPTANCE: dict[str, str] = {}


@pytest.fixture(scope="session")
def fixture_counts() -> dict:
    return json.loads((FIXTURES / "fixtures.json").read_text())


@pytest.fixture(scope="session")
def scd_root() -> Path:
    return FIXTURES / "scd_mini"


@pytest.fixture(scope="session")
def changevpr_root() -> Path:
    return FIXTURES / "changevpr_mini"


@pytest.fixture(scope="session")
def synthetic():
    from scenechange import make_backend

    return make_backend("synthetic")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    label = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        ACCEPTANCE[label] = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome in ACCEPTANCE.items():
        terminalreporter.write_line(f"{outcome:4s}  {label}")

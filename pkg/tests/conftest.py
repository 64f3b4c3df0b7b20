import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from calicert.metrics import BinningScheme, PredictionRecord
from calicert.mip import build_instance

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def e2_records():
    return [
        PredictionRecord("a", 0.23, True, lower=0.1, upper=0.6),
        PredictionRecord("b", 0.78, False, lower=0.5, upper=0.9),
    ]


@pytest.fixture
def e2():
    return build_instance(e2_records(), BinningScheme.equal_width(3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)



_criteria = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    number = int(name.split("_")[2])
    if report.failed:
        _criteria[number] = "FAIL"
    elif report.when == "call" and report.passed:
        _criteria.setdefault(number, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        terminalreporter.write_line(f"criterion {number:2d}: {_criteria[number]}")

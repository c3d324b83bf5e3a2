import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

import tnvault.decomp as _decomp  # noqa: E402

_PERTURBATIONS: list = []
_CRITERIA: dict[str, tuple[int, str]] = {}
_OUTCOMES: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture(scope="session", autouse=True)
def _observe_perturbations():
    """Record every perturbation drawn by the decompositions (read only)."""
    original = _decomp.sample_perturbation

    def recording(*args, **kwargs):
        rec = original(*args, **kwargs)
        _PERTURBATIONS.append(rec)
        return rec

    _decomp.sample_perturbation = recording
    yield
    _decomp.sample_perturbation = original


@pytest.fixture
def perturbation_log():
    return _PERTURBATIONS


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _CRITERIA[item.nodeid] = (int(m.args[0]), str(m.args[1]))


def pytest_runtest_logreport(report):
    if report.nodeid not in _CRITERIA:
        return
    num, _ = _CRITERIA[report.nodeid]
    if report.failed:
        _OUTCOMES[num] = "FAIL"
    elif report.skipped:
        _OUTCOMES.setdefault(num, "SKIP")
    elif report.when == "call":
        _OUTCOMES.setdefault(num, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    titles = {num: title for num, title in _CRITERIA.values()}
    for num in sorted(titles):
        terminalreporter.write_line(f"criterion {num:2d} {titles[num]}: {_OUTCOMES.get(num, 'NOT RUN')}")

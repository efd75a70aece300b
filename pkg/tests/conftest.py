import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("qbnet", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("qbnet")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE: list = []


@pytest.fixture
def accept():
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)

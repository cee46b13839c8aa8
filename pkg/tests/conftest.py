import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record a one-line pass/fail verdict for the acceptance summary."""

    def add(number: int, ok: bool, detail: str):
        ACCEPTANCE_LINES.append((number, f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"))
        print(ACCEPTANCE_LINES[-1][1])

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

import pytest

_LINES: list[str] = []
_REPORTS: dict = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion."""
    return _LINES


@pytest.fixture(scope="session")
def acceptance_reports():
    """Rendered single-worker reports, keyed by criterion, for the determinism rerun."""
    return _REPORTS


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criteria suite")


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in _LINES:
        terminalreporter.write_line(line)

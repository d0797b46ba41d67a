import pytest

from reltf.cache import DiskCache

_CRITERIA = {}


@pytest.fixture(scope="session")
def cache(tmp_path_factory):
    """Session-wide spectrum cache shared by the slower tests."""
    return DiskCache(tmp_path_factory.mktemp("reltf-cache"))


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, ok, detail)``; asserts ``ok``."""
    def record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[n] = line
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])

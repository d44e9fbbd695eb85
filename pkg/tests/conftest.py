import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def report(pytestconfig):
    """Record one acceptance line; returns ``ok`` so it can be asserted."""

    def _report(name, ok, detail):
        pytestconfig.stash[_LINES].append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

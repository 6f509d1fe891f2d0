import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def report_criterion(request):
    """Record a one-line pass/fail verdict shown in the terminal summary."""
    lines = request.config.stash[_LINES]

    def record(number: int, name: str, passed: bool, detail: str):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        lines.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)

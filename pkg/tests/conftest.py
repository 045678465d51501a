import pytest

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for the acceptance summary, then assert it."""
    lines = request.config.stash[_LINES_KEY]

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        lines.append((number, f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}"))
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)

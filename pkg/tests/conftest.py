import pytest

_LINES = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """record(number, ok, detail): log one acceptance verdict for the terminal summary."""
    lines = request.config.stash.setdefault(_LINES, {})

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])

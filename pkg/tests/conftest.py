import re

import pytest

_CRITERION = re.compile(r"test_criterion_(\d+)")

# qualitative verdicts recorded by tests that pass without asserting
QUALITATIVE: dict[int, str] = {}


@pytest.fixture
def record_qualitative():
    def record(criterion: int, verdict: str):
        QUALITATIVE[criterion] = verdict

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results: dict[int, str] = {}
    for status, label in (
        ("passed", "PASS"),
        ("failed", "FAIL"),
        ("error", "FAIL"),
        ("skipped", "SKIPPED"),
    ):
        for rep in terminalreporter.stats.get(status, []):
            m = _CRITERION.search(getattr(rep, "nodeid", ""))
            if not m:
                continue
            n = int(m.group(1))
            if results.get(n) != "FAIL":
                results[n] = label
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        line = f"criterion {n:2d}: {results[n]}"
        if n in QUALITATIVE:
            line += f" ({QUALITATIVE[n]})"
        terminalreporter.write_line(line)

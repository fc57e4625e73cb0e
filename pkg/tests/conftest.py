"""Shared pytest hooks: echo acceptance-criterion summary lines.

The acceptance tests register one "criterion N: PASS/FAIL" line each via
``record_criterion``; they are replayed in the terminal summary so they
stay visible even when output capture hides prints from passing tests.
"""

_CRITERION_LINES: list[str] = []


def record_criterion(line: str) -> None:
    _CRITERION_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_CRITERION_LINES):
        terminalreporter.write_line(line)

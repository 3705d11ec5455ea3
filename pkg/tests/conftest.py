import sys


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines, one per criterion, after the run."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])

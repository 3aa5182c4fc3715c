import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    import helpers

    if helpers.ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(helpers.ACCEPTANCE_RESULTS, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)

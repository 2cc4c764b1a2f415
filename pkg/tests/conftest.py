import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

from helpers import ACCEPTANCE_LOG  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LOG):
            terminalreporter.write_line(ACCEPTANCE_LOG[key])

"""Shared test hooks: the acceptance suite records one pass/fail line
per criterion, echoed after the run in a dedicated summary section."""

from __future__ import annotations

import sys
from pathlib import Path

# make sibling helper modules (preprocessing_goldens, ...) importable
sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_RESULTS: list[str] = []


def record_criterion(name: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    line = f"[{status}] {name}" + (f": {detail}" if detail else "")
    ACCEPTANCE_RESULTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)

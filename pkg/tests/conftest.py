"""Shared fixtures and the acceptance-summary terminal hook."""

from __future__ import annotations

import os

import pytest

from impactloc import build_replica, load_canonical
from impactloc.corpus import Dataset

# test_acceptance.py appends one "[PASS]/[FAIL] <criterion>" line per check;
# the terminal-summary hook below prints them even when capture is on.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_lines() -> list[str]:
    return ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def replica() -> Dataset:
    """The deterministic bundled replica corpus."""
    return build_replica(seed=0)


@pytest.fixture(scope="session")
def acceptance_dataset(replica: Dataset) -> Dataset:
    """Corpus used by acceptance checks: $DILC_PATH if set, else the replica."""
    path = os.environ.get("DILC_PATH")
    if path:
        return load_canonical(path)
    return replica


def pytest_terminal_summary(terminalreporter, exitstatus, config):  # noqa: ARG001
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

"""Fixtures and the secondary acceptance-summary hook."""

from __future__ import annotations

import pytest

from impactloc import build_replica
from impactloc.corpus import Dataset, split_random
from impactloc_finetune import export_instruction_records

# test_ft_acceptance.py appends one "[PASS]/[FAIL]" line per secondary check.
SECONDARY_LINES: list[str] = []


@pytest.fixture(scope="session")
def ft_replica() -> Dataset:
    return build_replica(seed=0)


@pytest.fixture(scope="session")
def ft_train_split(ft_replica: Dataset) -> Dataset:
    train, _ = split_random(ft_replica, 0.68, 0.20, seed=0)
    return train


@pytest.fixture(scope="session")
def smoke_records_path(ft_train_split: Dataset, tmp_path_factory):
    """A 20-record file exported from the head of the training split."""
    path = tmp_path_factory.mktemp("records") / "smoke20.jsonl"
    export_instruction_records(Dataset("smoke20", ft_train_split.posts[:20]), path)
    return path


@pytest.fixture
def secondary_lines() -> list[str]:
    return SECONDARY_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):  # noqa: ARG001
    if SECONDARY_LINES:
        terminalreporter.section("secondary acceptance criteria")
        for line in SECONDARY_LINES:
            terminalreporter.write_line(line)

"""Prompt construction for the two extraction tasks.

Instruction templates, output-format lines and the in-context example bank
live as plain-text package resources and are treated as frozen bytes: a
change there is a change to the experimental conditions, so the test suite
pins their checksums. build_prompt assembles instruction, example blocks and
the target post deterministically; the k-shot example section is always a
byte prefix of the (k+1)-shot section for the same task.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

TASKS = ("all_locations", "impact_and_impacted")
FAMILIES = ("basic", "persona", "cot")
SHOT_COUNTS = (0, 1, 6)

_EXAMPLES_PER_TASK = 6

_RESOURCE_FILES = (
    "templates/all_locations_basic.txt",
    "templates/all_locations_persona.txt",
    "templates/all_locations_cot.txt",
    "templates/impact_and_impacted_basic.txt",
    "templates/impact_and_impacted_persona.txt",
    "templates/impact_and_impacted_cot.txt",
    "templates/format_all_locations.txt",
    "templates/format_impact_and_impacted.txt",
    "examples/all_locations.txt",
    "examples/impact_and_impacted.txt",
)


class PromptError(ValueError):
    """Invalid prompt specification or corrupt prompt resources."""


@dataclass(frozen=True)
class PromptExample:
    """One in-context example: a tweet and its expected answer block."""

    example_id: str
    tweet: str
    answer: str


@dataclass(frozen=True)
class PromptSpec:
    """A point in the prompt grid: task, family, and shot configuration."""

    task: str
    family: str
    shots: int
    example_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise PromptError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.family not in FAMILIES:
            raise PromptError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.shots not in SHOT_COUNTS:
            raise PromptError(f"shots must be one of {SHOT_COUNTS}, got {self.shots}")
        if len(self.example_ids) != self.shots:
            raise PromptError(
                f"{self.shots}-shot spec needs {self.shots} example_ids, got {len(self.example_ids)}"
            )
        if len(set(self.example_ids)) != len(self.example_ids):
            raise PromptError(f"duplicate example_ids: {self.example_ids}")
        known = {e.example_id for e in load_example_bank()[self.task]}
        unknown = [eid for eid in self.example_ids if eid not in known]
        if unknown:
            raise PromptError(f"unknown example ids for task {self.task!r}: {unknown}")

    @classmethod
    def for_task(cls, task: str, family: str, shots: int) -> "PromptSpec":
        """Spec with the default example selection (bank order: E1, or E1..E6)."""
        if shots not in SHOT_COUNTS:
            raise PromptError(f"shots must be one of {SHOT_COUNTS}, got {shots}")
        ids = tuple(f"E{i}" for i in range(1, shots + 1))
        return cls(task=task, family=family, shots=shots, example_ids=ids)


def _resource_bytes(relpath: str) -> bytes:
    return (resources.files("impactloc") / "resources" / relpath).read_bytes()


def _resource_text(relpath: str) -> str:
    return _resource_bytes(relpath).decode("utf-8").rstrip("\n")


@lru_cache(maxsize=None)
def load_template(task: str, family: str) -> str:
    """The frozen instruction text for one (task, family) cell."""
    if task not in TASKS or family not in FAMILIES:
        raise PromptError(f"no template for task={task!r}, family={family!r}")
    return _resource_text(f"templates/{task}_{family}.txt")


@lru_cache(maxsize=None)
def output_format(task: str) -> str:
    """The frozen output-format block appended to every prompt."""
    if task not in TASKS:
        raise PromptError(f"no output format for task {task!r}")
    return _resource_text(f"templates/format_{task}.txt")


@lru_cache(maxsize=None)
def load_example_bank() -> dict[str, tuple[PromptExample, ...]]:
    """Parse the example resources into {task: six PromptExamples}."""
    bank: dict[str, tuple[PromptExample, ...]] = {}
    for task in TASKS:
        raw = _resource_text(f"examples/{task}.txt")
        examples: list[PromptExample] = []
        for block in raw.split("\n==="):
            block = block.strip("\n")
            if not block:
                continue
            lines = block.split("\n")
            header = lines[0]
            if not header.startswith("#E"):
                raise PromptError(f"{task} examples: bad block header {header!r}")
            try:
                sep = lines.index("---")
            except ValueError as exc:
                raise PromptError(f"{task} examples: block {header} has no --- separator") from exc
            tweet = "\n".join(lines[1:sep])
            answer = "\n".join(lines[sep + 1 :])
            if not tweet or not answer:
                raise PromptError(f"{task} examples: block {header} is incomplete")
            examples.append(PromptExample(example_id=header[1:], tweet=tweet, answer=answer))
        ids = [e.example_id for e in examples]
        if ids != [f"E{i}" for i in range(1, _EXAMPLES_PER_TASK + 1)]:
            raise PromptError(f"{task} examples: expected E1..E6 in order, got {ids}")
        bank[task] = tuple(examples)
    return bank


def expected_output_header(task: str) -> str | tuple[str, str]:
    """The answer header(s) a well-formed completion must contain."""
    if task == "all_locations":
        return "Locations mentioned:"
    if task == "impact_and_impacted":
        return ("Types of Impact:", "Impacted Location:")
    raise PromptError(f"unknown task {task!r}")


def build_prompt(spec: PromptSpec, post_text: str) -> str:
    """Render the full prompt for one post.

    Layout: instruction, blank line, one block per in-context example
    ("Tweet: <text>" then the answer, blank-line separated), the target
    "Tweet: <post>", and the output-format block.
    """
    bank = {e.example_id: e for e in load_example_bank()[spec.task]}
    parts: list[str] = [load_template(spec.task, spec.family), ""]
    for eid in spec.example_ids:
        ex = bank[eid]
        parts.append(f"Tweet: {ex.tweet}")
        parts.append(ex.answer)
        parts.append("")
    parts.append(f"Tweet: {post_text}")
    parts.append("")
    parts.append("Output format:")
    parts.append(output_format(spec.task))
    return "\n".join(parts)


def template_checksums() -> dict[str, str]:
    """sha256 of every prompt resource file, keyed by its relative path."""
    return {rel: hashlib.sha256(_resource_bytes(rel)).hexdigest() for rel in _RESOURCE_FILES}

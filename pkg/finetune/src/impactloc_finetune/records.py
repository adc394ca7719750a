"""Instruction-record export.

The record file — one UTF-8 JSON object per line with ``post_id``,
``instruction`` (the fully rendered prompt) and ``response`` (the gold
answer in the task's parseable output format) — is the only contract
between this package and the extraction package. Every record is
validated at export time: the response must re-parse to exactly the gold
entity lists, so a model trained on these records is supervised toward
output the downstream parser accepts verbatim.

Posts whose gold layers are empty are kept, with empty payloads after the
headers, so the model also learns to abstain.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from impactloc.corpus import Dataset, Post
from impactloc.parsing import (
    ImpactPrediction,
    format_impact_response,
    parse_impact_response,
)
from impactloc.prompts import PromptSpec, build_prompt

from .errors import ExportError

EXPORT_TASK = "impact_and_impacted"


@dataclass(frozen=True)
class InstructionRecord:
    """One supervised example: rendered prompt plus gold response text."""

    post_id: str
    instruction: str
    response: str

    def __post_init__(self) -> None:
        if not self.post_id or not self.instruction:
            raise ExportError("records need a post_id and a non-empty instruction")


def default_spec() -> PromptSpec:
    """The prompt variant used for fine-tuning: persona, six shots."""
    return PromptSpec.for_task(EXPORT_TASK, "persona", 6)


def gold_response(post: Post) -> str:
    """Serialize the post's gold impact layers; error if not lossless."""
    impacts = tuple(sp.surface for sp in post.gold.impacts)
    locations = tuple(sp.surface for sp in post.gold.impacted_locations)
    try:
        gold = ImpactPrediction(impacts=impacts, impacted_locations=locations)
    except ValueError as exc:
        raise ExportError(f"{post.post_id}: {exc}") from exc
    response = format_impact_response(gold)
    parsed = parse_impact_response(response)
    if parsed.impacts != impacts or parsed.impacted_locations != locations:
        raise ExportError(
            f"{post.post_id}: gold surfaces do not survive the response round-trip "
            f"(serialized {impacts!r}/{locations!r}, re-parsed "
            f"{parsed.impacts!r}/{parsed.impacted_locations!r}); surfaces containing "
            "separators or markup cannot be represented in the output format"
        )
    return response


def build_records(
    train: Dataset, spec: PromptSpec | None = None
) -> tuple[InstructionRecord, ...]:
    """One record per post, in dataset order, each round-trip validated."""
    spec = spec if spec is not None else default_spec()
    if spec.task != EXPORT_TASK:
        raise ExportError(
            f"instruction export targets the {EXPORT_TASK!r} task, got {spec.task!r}"
        )
    return tuple(
        InstructionRecord(
            post_id=post.post_id,
            instruction=build_prompt(spec, post.text),
            response=gold_response(post),
        )
        for post in train.posts
    )


def export_instruction_records(
    train: Dataset, out_path: str | Path, spec: PromptSpec | None = None
) -> tuple[InstructionRecord, ...]:
    """Write the record file for a training split and return its records."""
    records = build_records(train, spec)
    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(
                json.dumps(
                    {
                        "post_id": record.post_id,
                        "instruction": record.instruction,
                        "response": record.response,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )
    return records


def load_records(path: str | Path) -> tuple[InstructionRecord, ...]:
    """Read a record file back; errors carry the file name and line number."""
    path = Path(path)
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(
                    InstructionRecord(
                        post_id=obj["post_id"],
                        instruction=obj["instruction"],
                        response=obj["response"],
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ExportError(f"{path.name}:{lineno}: bad record ({exc})") from exc
    return tuple(records)


def records_sha256(path: str | Path) -> str:
    """Checksum of the record file bytes, pinned into training manifests."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

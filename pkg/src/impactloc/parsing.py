"""Parsing model completions into structured predictions.

Completions are free text; the contract is only that a well-formed answer
contains the task's header line(s). Parsing is tolerant where models
commonly vary (case, singular/plural headers, leading whitespace, quoted
entries, trailing periods, chain-of-thought preambles: the last header line
wins) and total via parse_or_empty, which never raises. A known lossy edge:
trailing-period stripping turns "U.S." into "U.S"; evaluation normalizes
punctuation anyway.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_LOC_HEADER = re.compile(r"^\s*locations?\s+mentioned\s*:\s*(.*?)\s*$", re.IGNORECASE)
_IMPACT_HEADER = re.compile(r"^\s*types?\s+of\s+impacts?\s*:\s*(.*?)\s*$", re.IGNORECASE)
_IMPACTED_HEADER = re.compile(r"^\s*impacted\s+locations?\s*:\s*(.*?)\s*$", re.IGNORECASE)

_COUNT_SUFFIX = re.compile(r"^(.*?)\s*\(\s*(\d+)\s*\)$")

_QUOTE_PAIRS = (('"', '"'), ("'", "'"), ("“", "”"), ("‘", "’"), ("`", "`"))

LOCATION_HEADER = "Locations mentioned:"
IMPACT_HEADERS = ("Types of Impact:", "Impacted Location:")


class ParseFailure(ValueError):
    """A completion without the required header line(s)."""

    def __init__(self, task: str, missing: tuple[str, ...], response: str) -> None:
        self.task = task
        self.missing = missing
        snippet = response.strip().replace("\n", " ")[:80]
        super().__init__(f"{task}: missing header(s) {missing}; response starts {snippet!r}")


@dataclass(frozen=True)
class LocationEntry:
    """One predicted location with its claimed occurrence count."""

    surface: str
    count: int

    def __post_init__(self) -> None:
        if not self.surface:
            raise ValueError("location surface must be non-empty")
        if self.count < 1:
            raise ValueError(f"location count must be >= 1, got {self.count}")


@dataclass(frozen=True)
class LocationPrediction:
    entries: tuple[LocationEntry, ...] = ()


@dataclass(frozen=True)
class ImpactPrediction:
    impacts: tuple[str, ...] = ()
    impacted_locations: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if any(not s for s in self.impacts) or any(not s for s in self.impacted_locations):
            raise ValueError("predicted entities must be non-empty strings")


def _last_payload(text: str, header: re.Pattern[str]) -> str | None:
    payload = None
    for line in text.splitlines():
        m = header.match(line)
        if m is not None:
            payload = m.group(1)
    return payload


def _split_entries(payload: str) -> list[str]:
    # Commas inside parentheses do not split: "Washington (DC, USA)" is one entry.
    parts: list[str] = []
    depth = 0
    cur: list[str] = []
    for ch in payload:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(0, depth - 1)
        elif ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
            continue
        cur.append(ch)
    parts.append("".join(cur))
    return parts


def _clean_entry(entry: str) -> str:
    s = " ".join(entry.split())
    while True:
        if len(s) >= 2:
            stripped = False
            for left, right in _QUOTE_PAIRS:
                if s.startswith(left) and s.endswith(right):
                    s = s[1:-1].strip()
                    stripped = True
                    break
            if stripped:
                continue
        if s.endswith("."):
            s = s[:-1].rstrip()
            continue
        return s


def _entries_of(payload: str) -> list[str]:
    out = []
    for part in _split_entries(payload):
        cleaned = _clean_entry(part)
        if cleaned:
            out.append(cleaned)
    return out


def parse_all_locations_response(text: str) -> LocationPrediction:
    """Parse a location-recognition completion.

    The payload of the last "Locations mentioned:" line (singular header and
    any casing accepted) is split on top-level commas; a "(n)" suffix gives
    the claimed count, defaulting to 1. Entries that clean to nothing or
    claim a count of 0 are dropped.
    """
    payload = _last_payload(text, _LOC_HEADER)
    if payload is None:
        raise ParseFailure("all_locations", (LOCATION_HEADER,), text)
    entries: list[LocationEntry] = []
    for raw in _entries_of(payload):
        m = _COUNT_SUFFIX.match(raw)
        if m is not None:
            surface = _clean_entry(m.group(1))
            count = int(m.group(2))
        else:
            surface, count = raw, 1
        if not surface or count == 0:
            continue
        entries.append(LocationEntry(surface=surface, count=count))
    return LocationPrediction(entries=tuple(entries))


def parse_impact_response(text: str) -> ImpactPrediction:
    """Parse an impact-extraction completion.

    Both headers must be present (last occurrence of each wins); either
    payload may be empty, meaning nothing was extracted for that list.
    """
    impacts_payload = _last_payload(text, _IMPACT_HEADER)
    impacted_payload = _last_payload(text, _IMPACTED_HEADER)
    missing = []
    if impacts_payload is None:
        missing.append(IMPACT_HEADERS[0])
    if impacted_payload is None:
        missing.append(IMPACT_HEADERS[1])
    if missing:
        raise ParseFailure("impact_and_impacted", tuple(missing), text)
    return ImpactPrediction(
        impacts=tuple(_entries_of(impacts_payload)),
        impacted_locations=tuple(_entries_of(impacted_payload)),
    )


def parse_or_empty(task: str, text: str) -> tuple[LocationPrediction | ImpactPrediction, bool]:
    """Total parse: (prediction, malformed). Malformed yields an empty prediction."""
    try:
        if task == "all_locations":
            return parse_all_locations_response(text), False
        if task == "impact_and_impacted":
            return parse_impact_response(text), False
    except ParseFailure:
        return (LocationPrediction() if task == "all_locations" else ImpactPrediction()), True
    raise ValueError(f"unknown task {task!r}")


def format_location_response(pred: LocationPrediction) -> str:
    """Canonical response text for a location prediction (inverse of parsing)."""
    if not pred.entries:
        return LOCATION_HEADER
    body = ", ".join(f"{e.surface} ({e.count})" for e in pred.entries)
    return f"{LOCATION_HEADER} {body}"


def format_impact_response(pred: ImpactPrediction) -> str:
    """Canonical two-line response text for an impact prediction."""
    first = IMPACT_HEADERS[0] + (" " + ", ".join(pred.impacts) if pred.impacts else "")
    second = IMPACT_HEADERS[1] + (" " + ", ".join(pred.impacted_locations) if pred.impacted_locations else "")
    return first + "\n" + second


# Short alias matching the operation name used in the CLI help text.
parse_all_locations = parse_all_locations_response

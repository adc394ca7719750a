"""Deterministic offline stand-in for a hosted instruction model.

The noisy stub reads the target tweet out of the prompt and answers with a
cheap heuristic extraction: capitalized token runs and hashtag bodies as
locations, lexicon words as impacts. It deliberately misbehaves the way real
models do, keyed by a hash of the tweet so runs are reproducible without
any state: occurrence counts get overclaimed, locations and impacts absent
from the text get injected, some answers carry a chain-of-thought preamble,
and a few are malformed (no header at all). Grounding should therefore
raise precision without touching recall. No gold data is consulted.

Endpoint URLs of the form ``stub://noisy`` (or ``stub://perfect-format``)
resolve to these transports, so experiments can run hermetically.
"""

from __future__ import annotations

import hashlib
import re

_IMPACT_LEXICON = (
    "feared dead", "lose their lives", "washed away", "without power", "property damaged",
    "cut off", "in ruins", "dead", "died", "deaths", "death", "injured", "damaged",
    "destroyed", "collapsed", "flooded", "flooding", "flood", "homeless", "trapped",
    "missing", "displaced", "burned", "stranded", "evacuated", "stuck", "broken",
)

_FAKE_LOCATIONS = ("Atlantis", "Riverholm", "Gotham City")
_FAKE_IMPACTS = ("vaporized", "tsunami")

_STOPWORDS = {
    "update", "breaking", "reports", "latest", "situation", "also", "badly", "damage",
    "rt", "the", "a", "an", "and", "or", "no", "it", "is", "are", "was", "word", "now",
    "please", "help", "thinking", "more", "over", "at", "in", "of", "to", "for", "fun",
    "fact", "he", "she", "they", "when", "you", "i", "my", "act", "st",
}

_PUNCT_STRIP = ".,;:!?\"'()[]|&"


def _h(s: str) -> int:
    return int.from_bytes(hashlib.sha256(s.encode("utf-8")).digest()[:8], "big")


def _tweet_from_prompt(prompt: str) -> str:
    tweet = ""
    for line in prompt.split("\n"):
        if line.startswith("Tweet: "):
            tweet = line[len("Tweet: "):]
    return tweet


def _candidate_locations(tweet: str) -> list[tuple[str, int]]:
    """Capitalized token runs and hashtag bodies, with naive substring counts."""
    names: list[str] = []
    run: list[str] = []

    def flush() -> None:
        if run:
            names.append(" ".join(run))
            run.clear()

    for raw in tweet.split():
        if raw.startswith(("#", "@")):
            flush()
            body = raw.lstrip("#@").strip(_PUNCT_STRIP)
            if raw.startswith("#") and body and body[0].isupper():
                names.append(body)
            continue
        clean = raw.strip(_PUNCT_STRIP)
        ok = (
            bool(clean)
            and clean[0].isupper()
            and not clean.isdigit()
            and clean.lower() not in _STOPWORDS
        )
        if ok:
            run.append(clean)
            if not raw.endswith(clean):
                flush()  # trailing punctuation ends the name
        else:
            flush()
    flush()
    out: list[tuple[str, int]] = []
    seen: set[str] = set()
    for name in names:
        low = name.lower()
        if low in seen:
            continue
        seen.add(low)
        count = max(1, tweet.lower().count(low))
        if _h(name + tweet) % 4 == 0:
            count += 1  # overclaimed occurrence
        out.append((name, count))
    return out


def _found_impacts(tweet: str) -> list[str]:
    low = tweet.lower()
    found: list[tuple[int, str]] = []
    taken: list[tuple[int, int]] = []
    for phrase in _IMPACT_LEXICON:
        for m in re.finditer(r"(?<!\w)" + re.escape(phrase) + r"(?!\w)", low):
            if any(s < m.end() and m.start() < e for s, e in taken):
                continue
            taken.append((m.start(), m.end()))
            found.append((m.start(), phrase))
            break
    return [p for _, p in sorted(found)]


def _noisy_all_locations(tweet: str) -> str:
    h = _h(tweet)
    if h % 23 == 0:
        return "I could not find any place names in this tweet."
    entries = list(_candidate_locations(tweet))
    if h % 3 == 0:
        entries.append((_FAKE_LOCATIONS[h % len(_FAKE_LOCATIONS)], 1))
    if h % 9 == 0:
        entries.append((_FAKE_LOCATIONS[(h + 1) % len(_FAKE_LOCATIONS)], 2))
    body = ", ".join(f"{name} ({count})" for name, count in entries)
    answer = f"Locations mentioned: {body}" if body else "Locations mentioned:"
    if h % 7 == 0:
        return "Step 1: scan the tweet for proper nouns.\nStep 2: count each occurrence.\n" + answer
    return answer


def _noisy_impacts(tweet: str) -> str:
    h = _h(tweet)
    if h % 23 == 0:
        return "No actionable impact information was found."
    impacts = _found_impacts(tweet)
    locations = [name for name, _ in _candidate_locations(tweet)][:2]
    if h % 5 == 0:
        impacts.append(_FAKE_IMPACTS[h % len(_FAKE_IMPACTS)])
    if h % 3 == 0:
        locations.append(_FAKE_LOCATIONS[h % len(_FAKE_LOCATIONS)])
    first = "Types of Impact:" + (" " + ", ".join(impacts) if impacts else "")
    second = "Impacted Location:" + (" " + ", ".join(locations) if locations else "")
    answer = first + "\n" + second
    if h % 7 == 0:
        return "Step 1: find impact words.\nStep 2: attach their locations.\n" + answer
    return answer


def _respond(prompt: str) -> str:
    tweet = _tweet_from_prompt(prompt)
    if "Types of Impact" in prompt:
        return _noisy_impacts(tweet)
    return _noisy_all_locations(tweet)


def make_stub_transport(kind: str = "noisy"):
    """A Transport serving deterministic completions; kinds: noisy, perfect-format."""
    if kind not in ("noisy", "perfect-format"):
        raise ValueError(f"unknown stub kind {kind!r}")

    def transport(request: dict, cfg) -> tuple[int, object]:
        prompt = request["messages"][0]["content"]
        if kind == "perfect-format":
            tweet = _tweet_from_prompt(prompt)
            if "Types of Impact" in prompt:
                impacts = _found_impacts(tweet)
                locs = [n for n, _ in _candidate_locations(tweet)][:2]
                text = ("Types of Impact:" + (" " + ", ".join(impacts) if impacts else "")
                        + "\nImpacted Location:" + (" " + ", ".join(locs) if locs else ""))
            else:
                body = ", ".join(f"{n} ({c})" for n, c in _candidate_locations(tweet))
                text = f"Locations mentioned: {body}" if body else "Locations mentioned:"
        else:
            text = _respond(prompt)
        return 200, {"choices": [{"message": {"content": text}}]}

    return transport


def transport_for_endpoint(endpoint_url: str):
    """Resolve stub:// URLs to a stub transport; None for real endpoints."""
    if not endpoint_url.startswith("stub://"):
        return None
    kind = endpoint_url[len("stub://"):] or "noisy"
    return make_stub_transport(kind)
